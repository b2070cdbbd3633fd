"""Exception taxonomy shared across the pipeline."""


class DieStudyError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(DieStudyError):
    pass


class DuplicateId(CorpusError):
    def __init__(self, coin_id: str):
        super().__init__(f"duplicate coin id: {coin_id!r}")
        self.coin_id = coin_id


class EmptyCorpus(CorpusError):
    pass


class MissingLabel(CorpusError):
    def __init__(self, coin_id: str):
        super().__init__(f"no die label for coin {coin_id!r}")
        self.coin_id = coin_id


class SelfPair(CorpusError):
    def __init__(self, coin_id: str):
        super().__init__(f"match record pairs coin {coin_id!r} with itself")
        self.coin_id = coin_id


class MalformedRecord(CorpusError):
    pass


class UnknownCoin(CorpusError):
    def __init__(self, coin_id: str):
        super().__init__(f"coin id {coin_id!r} is not part of the corpus")
        self.coin_id = coin_id


class Degenerate(DieStudyError):
    """Minimal sample or design matrix does not determine a homography."""


class MissingPairs(DieStudyError):
    def __init__(self, pairs):
        pairs = list(pairs)
        shown = ", ".join(f"({a},{b})" for a, b in pairs[:10])
        more = "" if len(pairs) <= 10 else f" and {len(pairs) - 10} more"
        super().__init__(f"no match source for pairs: {shown}{more}")
        self.pairs = pairs


class TooSmall(DieStudyError):
    pass


class UndefinedSilhouette(DieStudyError):
    """Silhouette is undefined for this partition (fewer than 2 clusters or all singletons)."""


class NoValidPartition(DieStudyError):
    pass
