"""Semi-automated scope annotation: persistent store and HTTP service."""
