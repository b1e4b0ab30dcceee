# Forecasting package
