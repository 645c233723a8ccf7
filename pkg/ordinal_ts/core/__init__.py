"""Label space, encoders, objectives, training and retrieval."""
