//! Two-task continual-learning simulation.
