"""Access to the packaged demonstration survey subset.

The files mirror the published-data CSV layout (pass log, component registry,
strata table).  They are synthetic but structurally faithful: multi-facility
sites, one to five passes per component-day with a median of two, a stratum
with no detections anywhere, and well sites with shared equipment.  See
tools/make_subset.py for the generator.
"""

from __future__ import annotations

from importlib import resources

from .frame import SurveyFrame, load_survey

__all__ = ["packaged_subset_paths", "load_packaged_subset", "packaged_sim_defaults_path"]


def packaged_subset_paths():
    """Paths of the bundled (passes, frame, strata) CSV files."""
    data = resources.files("msinv").joinpath("data")
    return (
        data / "subset_passes.csv",
        data / "subset_frame.csv",
        data / "subset_strata.csv",
    )


def packaged_sim_defaults_path():
    return resources.files("msinv").joinpath("data/sim_defaults.json")


def load_packaged_subset() -> SurveyFrame:
    """Load the bundled subset as a validated survey frame."""
    passes, frame, strata = packaged_subset_paths()
    return load_survey(str(passes), str(frame), str(strata))
