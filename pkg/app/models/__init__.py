# Models Module
