""" Tabular translation GAN oversampling for imbalanced binary classification. """

__version__ = "1.0"
