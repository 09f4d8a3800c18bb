# Command line commands
