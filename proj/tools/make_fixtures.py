#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Generate the synthetic CDE corpus, gold datasets and source dictionaries
used by the tests. Output is deterministic for a given seed."""

import argparse
import csv
import json
import random
from pathlib import Path

COLLECTIONS = {
    "NIH-Endorsed": 90,
    "NEI": 220,
    "NINDS": 420,
    "Project 5 (COVID-19)": 320,
    "NCI": 60, "NIDA": 60, "NHLBI": 60, "NICHD": 60, "NIMH": 60, "NIA": 60,
    "NIAID": 60, "NIDDK": 60, "NLM": 60, "PhenX": 60, "RADx-UP": 60,
    "Neuro-QOL": 60, "TBI": 60, "Sickle Cell Disease": 60, "AHRQ": 60,
}

SUBJECTS = {
    "NEI": ["retina", "cornea", "lens", "optic nerve", "macula", "iris", "conjunctiva",
            "vitreous", "eyelid", "sclera", "choroid", "visual field", "pupil", "tear film"],
    "NINDS": ["cerebral infarct", "hemorrhage", "carotid artery", "amyloid plaque", "tau tangle",
              "hippocampus", "cortical atrophy", "white matter lesion", "gait", "tremor",
              "cognitive test", "memory recall", "seizure", "brain imaging", "neurofibrillary"],
    "Project 5 (COVID-19)": ["SARS-CoV-2 test", "vaccine dose", "symptom", "fever", "cough",
                             "oxygen saturation", "hospital admission", "ventilator", "quarantine",
                             "household contact", "antibody", "loss of smell", "fatigue", "ICU stay"],
    "NIH-Endorsed": ["participant", "household income", "education", "employment", "insurance",
                     "tobacco use", "alcohol use", "marital status", "language", "housing"],
}
GENERIC_SUBJECTS = ["blood pressure", "heart rate", "body weight", "medication", "diagnosis",
                    "procedure", "laboratory test", "questionnaire", "pain", "sleep", "diet",
                    "physical activity", "family history", "adverse event", "specimen"]
ATTRIBUTES = ["thickness", "opacity grade", "measurement value", "lesion count", "exam finding",
              "assessment date", "assessment method", "laterality", "status", "severity score",
              "volume", "duration", "onset date", "result", "type", "frequency", "indicator",
              "location", "change from baseline", "category"]
QUALIFIERS = ["", "", "", "baseline", "follow-up", "self-reported", "clinician-assessed", "total"]
VALUE_SETS = [
    ["Yes", "No", "Unknown"],
    ["Mild", "Moderate", "Severe"],
    ["Left", "Right", "Bilateral"],
    ["Positive", "Negative", "Indeterminate"],
    ["Never", "Former", "Current"],
    ["Normal", "Abnormal", "Not assessed"],
]

# Records named after the worked examples.
ANCHORS = [
    {"name": "Imaging Modality Type", "collection": "NINDS",
     "definition": "Type of imaging modality used to acquire the brain images.",
     "values": ["CT", "MRI", "PET", "Ultrasound", "Angiography"]},
    {"name": "Lewy body pathology indicator", "collection": "NINDS",
     "definition": "Indicator of whether Lewy body pathology was observed at autopsy.",
     "values": ["Yes", "No", "Unknown"]},
    {"name": "Ethnicity", "collection": "Project 5 (COVID-19)",
     "definition": "Self-reported ethnicity of the participant.",
     "values": ["Hispanic or Latino", "Not Hispanic or Latino", "Unknown"]},
    {"name": "Race", "collection": "NIH-Endorsed",
     "definition": "Self-identified race of the participant.",
     "values": ["American Indian or Alaska Native", "Asian", "Black or African American",
                "Native Hawaiian or Other Pacific Islander", "White", "Unknown"]},
    {"name": "Sex", "collection": "NIH-Endorsed",
     "definition": "Biological sex of the participant assigned at birth.",
     "values": ["Male", "Female", "Unknown"]},
    {"name": "Visual acuity", "collection": "NEI",
     "definition": "Best corrected visual acuity measured with a standard chart.",
     "values": []},
    {"name": "Intraocular pressure", "collection": "NEI",
     "definition": "Pressure of the fluid inside the eye measured by tonometry.",
     "values": []},
]


def make_corpus(rng):
    records, seen = [], set()
    counter = 0

    def add(name, collection, definition, values, designations=(), questions=()):
        nonlocal counter
        counter += 1
        tiny = f"C{counter:05d}"
        pvs = []
        for i, v in enumerate(values):
            pv = {"valueName": v}
            if i % 2 == 0:
                pv["code"] = f"{tiny}-{i}"
                pv["codeSystem"] = "NCI Thesaurus"
            pvs.append(pv)
        records.append({
            "tinyId": tiny,
            "name": name,
            "designations": list(designations),
            "questionTexts": list(questions),
            "definition": definition,
            "collection": collection,
            "permissibleValues": pvs,
            "detailUrl": f"https://cde.nlm.nih.gov/deView?tinyId={tiny}",
        })
        seen.add((name.lower(), collection))

    for a in ANCHORS:
        add(a["name"], a["collection"], a["definition"], a["values"], [a["name"].upper()],
            [f"What is the {a['name'].lower()}?"])

    for collection, count in COLLECTIONS.items():
        subjects = SUBJECTS.get(collection, GENERIC_SUBJECTS)
        made = 0
        while made < count:
            subject = rng.choice(subjects)
            attribute = rng.choice(ATTRIBUTES)
            qualifier = rng.choice(QUALIFIERS)
            name = " ".join(w for w in [subject.capitalize(), attribute, qualifier] if w)
            if (name.lower(), collection) in seen:
                continue
            definition = f"The {attribute} of the {subject}" + (f", recorded at {qualifier}" if qualifier else "") + "."
            values = rng.choice(VALUE_SETS) if rng.random() < 0.4 else []
            designations = [f"{subject} {attribute}".title()] if rng.random() < 0.3 else []
            questions = [f"Please record the {subject} {attribute}."] if rng.random() < 0.5 else []
            add(name, collection, definition, values, designations, questions)
            made += 1
    return records


def paraphrase(rng, record):
    words = record["name"].split()
    style = rng.randrange(4)
    if style == 0:
        name = record["name"]
    elif style == 1:
        name = record["name"].lower()
    elif style == 2 and len(words) > 2:
        name = " ".join(words[:-1])
    else:
        name = record["name"] + " (study form)"
    return name, record["definition"].rstrip(".")


def source_values(rng, record):
    names = [pv["valueName"] for pv in record["permissibleValues"]]
    if not names or rng.random() < 0.3:
        return []
    if rng.random() < 0.5:
        return names
    return [n[:3] for n in names]


UNMAPPED_STEMS = ["Study site code", "Form version", "Record locator", "Coordinator initials",
                  "Data entry timestamp", "Visit window flag", "Local lab batch", "Scanner serial number",
                  "Protocol deviation note", "Internal randomization key", "Chart audit flag",
                  "Shipping manifest number"]


def make_dataset(rng, name, pool, counts, group_sizes, unmapped, pinned=()):
    """counts = (one_to_one, many_to_one, one_to_many). Targets never repeat
    across groups so each entry lands in its intended setting."""
    one, many, split = counts
    assert sum(group_sizes) == many
    available = [r for r in pool if r["tinyId"] not in {p[1]["tinyId"] for p in pinned}]
    rng.shuffle(available)
    take = iter(available)
    rows = []

    for source, target in pinned:
        rows.append((source, target["definition"].rstrip("."), [], [target["tinyId"]]))
    for _ in range(one - len(pinned)):
        t = next(take)
        n, d = paraphrase(rng, t)
        rows.append((n, d, source_values(rng, t), [t["tinyId"]]))
    for size in group_sizes:
        t = next(take)
        for k in range(size):
            suffix = ["left side", "right side", "visit 2", "visit 3", "repeat"][k]
            rows.append((f"{t['name']} {suffix}", t["definition"].rstrip("."), source_values(rng, t), [t["tinyId"]]))
    for _ in range(split):
        a, b = next(take), next(take)
        rows.append((f"{a['name']} and {b['name'].lower()}", f"{a['definition']} {b['definition']}", [],
                     sorted([a["tinyId"], b["tinyId"]])))
    for k in range(unmapped):
        stem = UNMAPPED_STEMS[k % len(UNMAPPED_STEMS)]
        rows.append((f"{stem} {k // len(UNMAPPED_STEMS) + 1}", f"Local administrative field {k + 1}", [], []))
    rng.shuffle(rows)
    return [(name, *r) for r in rows]


def escape_values(values):
    return "|".join(v.replace("\\", "\\\\").replace("|", "\\|") for v in values)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    corpus = make_corpus(rng)
    by_name = {(r["name"], r["collection"]): r for r in corpus}

    def pool(*collections):
        return [r for r in corpus if r["collection"] in collections and r["name"] not in
                {a["name"] for a in ANCHORS}]

    rows = []
    rows += make_dataset(rng, "Eye", pool("NIH-Endorsed", "NEI"), (3, 13, 1), [3, 2, 3, 2, 3], 23,
                         pinned=[("Visual acuity", by_name[("Visual acuity", "NEI")])])
    rows += make_dataset(rng, "Stroke", pool("NIH-Endorsed", "NINDS"), (18, 2, 1), [2], 27,
                         pinned=[("Imaging Modality Type", by_name[("Imaging Modality Type", "NINDS")])])
    rows += make_dataset(rng, "ADRD", pool("NIH-Endorsed", "NINDS"), (70, 17, 16), [2, 2, 3, 2, 3, 2, 3], 0,
                         pinned=[("Lewy body pathology indicator",
                                  by_name[("Lewy body pathology indicator", "NINDS")])])
    rows += make_dataset(rng, "COVID-19", pool("NIH-Endorsed", "Project 5 (COVID-19)"), (21, 85, 17),
                         [3, 2] * 17, 178,
                         pinned=[("Ethnicity", by_name[("Ethnicity", "Project 5 (COVID-19)")]),
                                 ("Race-White", by_name[("Race", "NIH-Endorsed")])])

    with open(out / "corpus.json", "w", encoding="utf-8") as f:
        json.dump(corpus, f, indent=1, ensure_ascii=False)
        f.write("\n")

    with open(out / "gold.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["dataset", "source_name", "source_description", "source_values", "accepted_target_ids"])
        for ds, n, d, vals, targets in rows:
            w.writerow([ds, n, d, escape_values(vals), ";".join(targets)])

    with open(out / "eye_dictionary.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["name", "description", "values"])
        for ds, n, d, vals, _ in rows:
            if ds == "Eye":
                w.writerow([n, d, escape_values(vals)])

    # Fifty elements with quoting hazards and extra columns for store round-trips.
    with open(out / "dictionary50.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["name", "description", "values", "form", "note"])
        hazards = ["comma, inside", 'a "quoted" word', "line\nbreak", "pipe | literal", "ünïcødé café",
                   "  padded  ", "back\\slash"]
        for i in range(50):
            t = corpus[rng.randrange(len(corpus))]
            vals = [pv["valueName"] for pv in t["permissibleValues"]]
            if i % 7 == 3:
                vals = vals + ["a|b"]
            w.writerow([f"{t['name']} {i}", f"{t['definition']} {hazards[i % len(hazards)]}",
                        escape_values(vals), f"form-{i % 5}", hazards[(i + 3) % len(hazards)] if i % 2 else ""])


if __name__ == "__main__":
    main()
