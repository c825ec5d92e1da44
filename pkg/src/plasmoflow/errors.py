"""Exception hierarchy shared across the pipeline.

Every error carries a stable machine-readable ``code`` so the CLI and the
HTTP layer can emit it without string-matching messages.
"""


class PlasmoflowError(Exception):
    code = "error"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def as_dict(self):
        return {"code": self.code, "message": str(self), **self.context}


class MissingSaltError(PlasmoflowError):
    code = "missing_salt"


class EmptyUserError(PlasmoflowError):
    code = "empty_user"


class BadFileError(PlasmoflowError):
    code = "bad_file"


class CoincidentTowersError(PlasmoflowError):
    code = "coincident_towers"


class TowerOutsideRegionError(PlasmoflowError):
    code = "tower_outside_region"


class DegenerateCatchmentError(PlasmoflowError):
    code = "degenerate_catchment"


class UnmappedTowerError(PlasmoflowError):
    code = "unmapped_tower"


class UnknownSettlementError(PlasmoflowError):
    code = "unknown_settlement"


class ZeroPopulationError(PlasmoflowError):
    code = "zero_population"


class MissingIncidenceError(PlasmoflowError):
    code = "missing_incidence"


class BadConfigError(PlasmoflowError):
    code = "bad_config"


class NoSnapshotError(PlasmoflowError):
    code = "no_snapshot"
