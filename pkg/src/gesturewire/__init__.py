"""gesturewire: personalized IMU gesture-to-message recognition.

Pipeline pieces: recording ingestion and synthesis (signal), a rule-based
LCSS recognizer (baseline), a transformer classifier with self-supervised
pretraining (model, train), evaluation metrics (metrics), and a streaming
TCP inference service (serve). A minimal autodiff core lives in tensorad.
"""

__version__ = "0.1.0"
