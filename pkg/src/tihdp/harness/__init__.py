"""Command line, evaluation metrics, scripted controller, trajectory logs and rendering."""
