"""Numpy DnCNN / FFDNet denoisers with hand-written backpropagation."""
