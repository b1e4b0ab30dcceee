# Storage package