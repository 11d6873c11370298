"""Error-bounded trajectory compression with probabilistic range queries.

Modules, bottom-up: ``geometry`` (PSED, candidate regions), ``io_model``
and ``synthetic`` (data and formats), ``compressor``, ``uncertainty``
(discarded-point sampling), ``index`` (ASP_tree), ``query`` and
``experiments``; ``cli`` ties them together.
"""
