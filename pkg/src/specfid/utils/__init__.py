"""Support code shared by the command line front end: plotting and caching."""
