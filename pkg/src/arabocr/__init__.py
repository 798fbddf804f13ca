"""Arabic text recognition: shaping, synthetic rendering, a CNN-BLSTM
recognizer trained with CTC, and evaluation metrics."""

__version__ = "0.1.0"
