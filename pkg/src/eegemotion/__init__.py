"""EEG emotion recognition: band-power features, VAD classifiers and a streaming detector."""

__version__ = "0.1.0"
