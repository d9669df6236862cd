from django.conf import settings


APP_MODULE_NAME = getattr(settings, 'SITEBID_APP_MODULE_NAME', 'sitebids')
"""Module name to search sitebid registrations (custom RPC models, bidders) in."""

INIT_BUILTIN_TYPES = getattr(settings, 'SITEBID_INIT_BUILTIN_TYPES', True)
"""Whether to register builtin RPC model types and bidders."""

SEQ_LEN = getattr(settings, 'SITEBID_SEQ_LEN', 64)
"""Token sequence length an ad text is truncated/padded to."""

VOCAB_SIZE = getattr(settings, 'SITEBID_VOCAB_SIZE', 20000)
"""Vocabulary capacity including the reserved pad/unk entries."""

CLUSTER_THRESHOLD = getattr(settings, 'SITEBID_CLUSTER_THRESHOLD', 0.35)
"""Cosine distance at which agglomerative merging stops."""

GBRT_N_TREES = getattr(settings, 'SITEBID_GBRT_N_TREES', 200)
"""Number of boosted trees."""

GBRT_MAX_DEPTH = getattr(settings, 'SITEBID_GBRT_MAX_DEPTH', 6)
"""Maximum depth of every boosted tree."""

GBRT_LEARNING_RATE = getattr(settings, 'SITEBID_GBRT_LEARNING_RATE', 0.1)
"""Shrinkage applied to every tree output."""

GBRT_MIN_LEAF_WEIGHT = getattr(settings, 'SITEBID_GBRT_MIN_LEAF_WEIGHT', 1.0)
"""Minimal clicks weight allowed in a leaf."""

LINEAR_L2 = getattr(settings, 'SITEBID_LINEAR_L2', 1.0)
"""Ridge penalty of the linear RPC baseline."""

RPS_TARGET = getattr(settings, 'SITEBID_RPS_TARGET', 1.0)
"""Business RPS goal used by target-RPS bidding."""
