"""Video-guided post-correction of ASR transcripts.

Batch pipeline that extracts contextual information from a clip's video via
a multimodal chat endpoint, asks a language-model endpoint to correct the
ASR hypothesis with that context, and scores the result with a word-level
alignment engine.
"""

__version__ = "0.1.0"
