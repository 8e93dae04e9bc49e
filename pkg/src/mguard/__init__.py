"""Adversarial LSTM modeling of hourly meter load with latent-inversion
anomaly scoring: data pipeline, model, training loop, detector, metrics,
synthetic corpus generator and a batch CLI."""

__version__ = "0.1.0"
