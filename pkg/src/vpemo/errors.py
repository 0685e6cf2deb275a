"""Exception hierarchy.

Everything raised on bad input derives from :class:`ValidationError` (CLI exit
code 2); failures of out-of-process stages raise :class:`ExternalStageFailed`
(exit code 3).
"""
from __future__ import annotations


class VpemoError(Exception):
    pass


class ValidationError(VpemoError, ValueError):
    pass


# -- file formats -----------------------------------------------------------

class FormatError(ValidationError):
    def __init__(self, message: str, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class MalformedLine(ValidationError):
    def __init__(self, line: int, text: str = ""):
        self.line = line
        super().__init__(f"malformed line {line}: {text!r}")


class UnknownUtterance(ValidationError):
    def __init__(self, utt_id: str, line: int | None = None):
        self.utt_id = utt_id
        self.line = line
        at = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown utterance {utt_id!r}{at}")


# -- numerics ---------------------------------------------------------------

class DimMismatch(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NoTrials(ValidationError):
    def __init__(self, message: str = "need at least one target and one nontarget trial", subset: str | None = None):
        self.subset = subset
        if subset is not None:
            message = f"{subset}: {message}"
        super().__init__(message)


class UnknownLabel(ValidationError):
    pass


class EmptyReference(ValidationError):
    pass


# -- kNN-VC -----------------------------------------------------------------

class PoolTooSmall(ValidationError):
    def __init__(self, actual: int, required: int):
        self.actual = actual
        self.required = required
        super().__init__(f"target pool has {actual} frames, {required} required")


class ZeroNormFrame(ValidationError):
    pass


# -- proxy selection / probe / attacker --------------------------------------

class NoCandidates(ValidationError):
    pass


class EmptyParts(ValidationError):
    pass


class TooFewClasses(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"class {label!r} has fewer than 2 samples")


class MissingEmbedding(ValidationError):
    def __init__(self, utt_id: str):
        self.utt_id = utt_id
        super().__init__(f"no embedding for {utt_id!r}")


# -- synthgen / viz / pipeline ---------------------------------------------

class InvalidConfig(ValidationError):
    pass


class NotEnoughSpeakers(ValidationError):
    pass


class NotEnoughUtterances(ValidationError):
    pass


class TooManyPoints(ValidationError):
    pass


class PerplexityTooLarge(ValidationError):
    pass


class MissingArtifact(ValidationError):
    def __init__(self, utt_id: str, kind: str):
        self.utt_id = utt_id
        self.kind = kind
        super().__init__(f"{utt_id}: missing {kind} artifact")


class EmptyReport(ValidationError):
    pass


class ExternalStageFailed(VpemoError):
    def __init__(self, utt_id: str, exit_code: int, stderr: str = ""):
        self.utt_id = utt_id
        self.exit_code = exit_code
        self.stderr = stderr
        super().__init__(f"external stage failed for {utt_id} (exit {exit_code})")
