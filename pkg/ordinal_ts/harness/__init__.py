"""Missing-class experiment protocols, runner and reports."""
