"""Scripted end-to-end scenario: 12-file lake, 7 file clusters, 8 helpers.

The query needs three tables spread across three clusters (ages, protein
z-scores, enrollment years). Exactly those three file agents volunteer on
the broadcast (3 of the 8 helpers; the search agent and the other four file
agents decline), and the final program reads exactly the ground-truth files
and prints the planted answer 60.
"""

from __future__ import annotations

import json
from pathlib import Path

from fixture_formats import write_csv

ANSWER = "60"
QUERY = (
    "Among patients enrolled after 2019, what is the age of the patient "
    "with the highest APP z-score?"
)

GROUND_TRUTH_PATHS = [
    "cohort/patients_demographics.csv",
    "proteomics/protein_zscores.csv",
    "enrollment/enrollment_log.csv",
]

# cluster label -> files, in clustering-reply order (cluster ids c000..c006)
CLUSTERS = {
    "Patient demographics": ["cohort/patients_demographics.csv"],
    "Proteomics scores": ["proteomics/protein_zscores.csv"],
    "Enrollment records": ["enrollment/enrollment_log.csv"],
    "Rainfall series": ["climate/rain_2019.csv", "climate/rain_2020.csv"],
    "Wildfire statistics": ["wildfire/wildfire_acres.csv", "wildfire/wildfire_causes.csv"],
    "Star catalogs": ["astro/star_catalog.csv", "astro/star_positions.csv"],
    "Notes and protocols": ["notes/study_notes.txt", "notes/lab_protocol.txt", "notes/site_readme.txt"],
}

FINAL_PROGRAM = """\
import pandas as pd

ages = pd.read_csv("cohort/patients_demographics.csv")
scores = pd.read_csv("proteomics/protein_zscores.csv")
enrollment = pd.read_csv("enrollment/enrollment_log.csv")

df = ages.merge(scores, on="patient_id").merge(enrollment, on="patient_id")
df = df[df["enrollment_year"] > 2019]
print(int(df.loc[df["app_z_score"].idxmax(), "age"]))"""


def build_e2e_lake(root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    for sub in ("cohort", "proteomics", "enrollment", "climate", "wildfire", "astro", "notes"):
        (root / sub).mkdir(exist_ok=True)

    write_csv(
        root / "cohort/patients_demographics.csv",
        ["patient_id", "age"],
        [["p0", 74], ["p1", 60], ["p2", 55], ["p3", 68], ["p4", 47], ["p5", 52]],
    )
    write_csv(
        root / "proteomics/protein_zscores.csv",
        ["patient_id", "app_z_score"],
        [["p0", 3.5], ["p1", 2.9], ["p2", 1.1], ["p3", 2.0], ["p4", -0.3], ["p5", 0.7]],
    )
    write_csv(
        root / "enrollment/enrollment_log.csv",
        ["patient_id", "enrollment_year"],
        [["p0", 2018], ["p1", 2020], ["p2", 2021], ["p3", 2019], ["p4", 2020], ["p5", 2021]],
    )
    write_csv(root / "climate/rain_2019.csv", ["month", "mm"], [[m, 10 * m] for m in range(1, 13)])
    write_csv(root / "climate/rain_2020.csv", ["month", "mm"], [[m, 9 * m] for m in range(1, 13)])
    write_csv(root / "wildfire/wildfire_acres.csv", ["year", "acres"], [[2019, 4.6], [2020, 10.2]])
    write_csv(root / "wildfire/wildfire_causes.csv", ["cause", "count"], [["lightning", 41], ["human", 77]])
    write_csv(root / "astro/star_catalog.csv", ["star_id", "magnitude"], [["s1", 4.2], ["s2", 5.0]])
    write_csv(root / "astro/star_positions.csv", ["star_id", "ra", "dec"], [["s1", 10.1, -3.2]])
    (root / "notes/study_notes.txt").write_text("cohort study notes\n")
    (root / "notes/lab_protocol.txt").write_text("protocol v2\n")
    (root / "notes/site_readme.txt").write_text("site layout\n")


def _fenced(obj) -> str:
    return "```json\n" + json.dumps(obj) + "\n```"


def _clustering_reply() -> str:
    payload = {"clusters": [{"label": label, "files": files} for label, files in CLUSTERS.items()]}
    return "Grouping by the name patterns:\n" + _fenced(payload)


def _yes_plan(paths: list[str], load: str, prep: str) -> str:
    return f"YES\nFILES: {', '.join(paths)}\nLOAD:\n{load}\nPREPROCESSING:\n{prep}"


def e2e_script() -> dict[str, list[str]]:
    """Per-caller scripted replies for the whole run (offline + online)."""
    script: dict[str, list[str]] = {
        "clustering": [_clustering_reply()],
        "main": [
            "ACTION: planning\n1) discover which files hold ages, APP z-scores and "
            "enrollment years 2) merge on patient_id 3) filter and compute.",
            "ACTION: request_help\nI need patient-level tables, likely CSV files "
            "keyed by patient_id, with columns for Age, APP-Z score, and "
            "enrollment year. Please point me at the relevant files and how to "
            "load them.",
            "ACTION: execute_code\n```python\n" + FINAL_PROGRAM + "\n```",
            "ACTION: answer\n```python\n" + FINAL_PROGRAM + "\n```",
        ],
        "search": ["NO\nThis asks for local data files, which is outside web research."],
    }

    # offline: multi-file clusters answer a selection then an analysis;
    # singletons skip straight to the analysis
    labels = list(CLUSTERS)
    for i, label in enumerate(labels):
        caller = f"file:c{i:03d}"
        files = CLUSTERS[label]
        turns = []
        if len(files) > 1:
            turns.append(_fenced(files[:2]))
        turns.append(f"Analysis of {label!r}: {len(files)} file(s); " + "; ".join(files))
        script[caller] = turns

    # online: the three holders volunteer, the rest decline
    script["file:c000"].append(
        _yes_plan(
            ["cohort/patients_demographics.csv"],
            'pd.read_csv("cohort/patients_demographics.csv")',
            "patient_id is the join key; age is an integer column.",
        )
    )
    script["file:c001"].append(
        _yes_plan(
            ["proteomics/protein_zscores.csv"],
            'pd.read_csv("proteomics/protein_zscores.csv")',
            "app_z_score holds the APP-Z values requested.",
        )
    )
    script["file:c002"].append(
        _yes_plan(
            ["enrollment/enrollment_log.csv"],
            'pd.read_csv("enrollment/enrollment_log.csv")',
            "enrollment_year is an integer year; filter > 2019.",
        )
    )
    for i in range(3, 7):
        script[f"file:c{i:03d}"].append("NO\nNothing here matches ages, APP scores or enrollment.")
    return script


def write_script_file(path: Path) -> Path:
    path.write_text(json.dumps(e2e_script(), indent=2))
    return path


def write_task_manifest(path: Path, lake_root: Path) -> Path:
    manifest = {
        "tasks": [
            {
                "task_id": "task-cohort",
                "dataset": "synthetic",
                "query_text": QUERY,
                "lake_root": str(lake_root),
                "ground_truth_file_ids": GROUND_TRUTH_PATHS,
                "reference_answer": ANSWER,
                "checker": "ExactScript",
            }
        ]
    }
    path.write_text(json.dumps(manifest, indent=2))
    return path


MS_PROGRAM = """\
import pandas as pd

ages = pd.read_csv("cohort/patients_demographics.csv")
print(int(ages["age"].max()))"""


def master_slave_script() -> dict[str, list[str]]:
    """Direct-invocation variant: only the demographics agent is ever asked,
    so the files held by the other two ground-truth clusters go undiscovered."""
    script = e2e_script()
    script["main"] = [
        "ACTION: planning\nfind the patient tables and compute the answer.",
        "ACTION: invoke_agent\nAGENT: file:c000\nProvide the patient-level tables "
        "with ages, APP z-scores and enrollment years.",
        "ACTION: answer\n```python\n" + MS_PROGRAM + "\n```",
    ]
    # c000 answers the direct instruction with what it owns (no verdict line)
    script["file:c000"] = [
        script["file:c000"][0],
        "FILES: cohort/patients_demographics.csv\nLOAD:\n"
        'pd.read_csv("cohort/patients_demographics.csv")\nPREPROCESSING:\nnone',
    ]
    # the other agents only run their offline analyses
    for i in range(1, 7):
        script[f"file:c{i:03d}"] = script[f"file:c{i:03d}"][:-1]
    script["search"] = []
    return script
