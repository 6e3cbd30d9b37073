"""Drug database: ingestion, name normalization, and constraint-narrowing lookup.

Disambiguation walks a fixed constraint order (name, dose, form, route, then
constraints implied by posology wording) and stops as soon as at most one
candidate remains, mirroring how a pharmacist narrows down "which presentation
did they mean".
"""
from __future__ import annotations

import csv
import re
import unicodedata
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from importlib import resources
from typing import Callable, Optional

from .taxonomy import PrescriptionFrame

_TRADEMARK = re.compile(r"[®™©]")
_WS = re.compile(r"\s+")


class IngestError(ValueError):
    """Raised for unreadable rows, duplicate codes or missing columns."""


class NoDrugMentioned(ValueError):
    """Frame names no drug and carries no usable implicit constraint."""


def normalize_text(s: str) -> str:
    """Lowercase, fold accents, strip trademark marks, collapse whitespace."""
    s = _TRADEMARK.sub("", s)
    s = unicodedata.normalize("NFKD", s)
    s = "".join(ch for ch in s if not unicodedata.combining(ch))
    s = s.lower()
    return _WS.sub(" ", s).strip()


# Canonical dose units and their spoken/written synonyms.
UNIT_SYNONYMS = {
    "mg": {"mg", "milligram", "milligrams", "milligramme", "milligrammes"},
    "g": {"g", "gram", "grams", "gramme", "grammes"},
    "mcg": {"mcg", "microgram", "micrograms", "microgramme", "microgrammes", "ug"},
    "ml": {"ml", "milliliter", "milliliters", "millilitre", "millilitres"},
    "iu": {"iu", "ui", "international unit", "international units"},
    "percent": {"percent", "%"},
}

_UNIT_CANON = {syn: canon for canon, syns in UNIT_SYNONYMS.items() for syn in syns}


def canonical_unit(unit: str) -> str:
    return _UNIT_CANON.get(normalize_text(unit), normalize_text(unit))


def format_decimal(d: Decimal) -> str:
    """Plain decimal string, no exponent notation ('500', '0.25')."""
    s = format(d.normalize(), "f")
    return s


# Intake-unit wording to implied constraints on the record.  "10 drops" tells
# us the form, "2 injections" tells us the route family.
INJECTABLE_ROUTES = ("intravenous", "intramuscular", "subcutaneous")

INTAKE_UNIT_FORM_HINTS = {
    "drop": ("form_contains", "drops"),
    "drops": ("form_contains", "drops"),
    "tablet": ("form_contains", "tablet"),
    "tablets": ("form_contains", "tablet"),
    "capsule": ("form_contains", "capsule"),
    "capsules": ("form_contains", "capsule"),
    "sachet": ("form_contains", "sachet"),
    "sachets": ("form_contains", "sachet"),
    "suppository": ("form_contains", "suppository"),
    "suppositories": ("form_contains", "suppository"),
    "spray": ("form_contains", "spray"),
    "sprays": ("form_contains", "spray"),
    "patch": ("form_contains", "patch"),
    "patches": ("form_contains", "patch"),
    "spoonful": ("form_contains", "syrup"),
    "spoonfuls": ("form_contains", "syrup"),
    "inhalation": ("form_contains", "inhalation"),
    "inhalations": ("form_contains", "inhalation"),
    "injection": ("route_in", INJECTABLE_ROUTES),
    "injections": ("route_in", INJECTABLE_ROUTES),
    "ampoule": ("route_in", INJECTABLE_ROUTES),
    "ampoules": ("route_in", INJECTABLE_ROUTES),
}

# Inverse view used by the data generator: which intake unit fits a form.
FORM_INTAKE_UNITS = (
    ("effervescent tablet", "tablet"),
    ("tablet", "tablet"),
    ("capsule", "capsule"),
    ("drops", "drop"),
    ("infusion", "injection"),
    ("solution for injection", "injection"),
    ("syrup", "spoonful"),
    ("sachet", "sachet"),
    ("powder for oral solution", "sachet"),
    ("nasal spray", "spray"),
    ("suppository", "suppository"),
    ("cream", "application"),
    ("ointment", "application"),
    ("patch", "patch"),
    ("inhalation", "inhalation"),
    ("oral solution", "spoonful"),
)


def intake_unit_for_form(form: str) -> str:
    """Intake unit wording that agrees with a dosage form."""
    nform = normalize_text(form)
    for needle, unit in FORM_INTAKE_UNITS:
        if needle in nform:
            return unit
    return "dose"


@dataclass(frozen=True)
class DrugRecord:
    ucd_code: str
    brand_name: str
    inn: str
    dose_value: Decimal
    dose_unit: str
    form: str
    route: str
    per_container: Optional[str] = None

    def __post_init__(self):
        if self.dose_value <= 0:
            raise IngestError(f"{self.ucd_code}: dose_value must be > 0")
        if not self.dose_unit:
            raise IngestError(f"{self.ucd_code}: dose_unit must be non-empty")

    @property
    def label(self) -> str:
        """Full display label, e.g. 'OFLOXACINE 200 mg/40 ml, solution for infusion'."""
        dose = format_decimal(self.dose_value)
        volume = ""
        if self.per_container and self.per_container.endswith("ml"):
            volume = f"/{self.per_container}"
        return f"{self.brand_name} {dose} {self.dose_unit}{volume}, {self.form}"


@dataclass
class DrugDatabase:
    records: list[DrugRecord] = field(default_factory=list)
    name_index: dict[str, list[str]] = field(default_factory=dict)
    _by_code: dict[str, DrugRecord] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._by_code:
            self._by_code = {r.ucd_code: r for r in self.records}
        if not self.name_index:
            self._build_index()
        for ids in self.name_index.values():
            for code in ids:
                if code not in self._by_code:
                    raise IngestError(f"index entry points at unknown record {code}")

    def _build_index(self):
        for rec in self.records:
            for key in (normalize_text(rec.brand_name), normalize_text(rec.inn)):
                if key:
                    self.name_index.setdefault(key, [])
                    if rec.ucd_code not in self.name_index[key]:
                        self.name_index[key].append(rec.ucd_code)

    def __len__(self):
        return len(self.records)

    def get(self, ucd_code: str) -> Optional[DrugRecord]:
        return self._by_code.get(ucd_code)

    def all_names(self) -> set[str]:
        return set(self.name_index)

    def forms(self) -> set[str]:
        return {normalize_text(r.form) for r in self.records}


DEFAULT_COLUMN_MAP = {
    "ucd_code": "ucd_code",
    "brand_name": "brand_name",
    "inn": "inn",
    "dose_value": "dose_value",
    "dose_unit": "dose_unit",
    "form": "form",
    "route": "route",
    "per_container": "per_container",
}

_MANDATORY_COLUMNS = ("ucd_code", "brand_name", "inn", "dose_value", "dose_unit", "form", "route")


def _sniff_delimiter(header_line: str) -> str:
    return "\t" if "\t" in header_line else ";"


def ingest(source, column_map: Optional[dict[str, str]] = None) -> DrugDatabase:
    """Parse a delimiter-separated drug table (tab or semicolon, header row).

    column_map maps DrugRecord field names to source column names; fields
    absent from the map fall back to same-named columns.
    """
    cmap = dict(DEFAULT_COLUMN_MAP)
    if column_map:
        cmap.update(column_map)

    with open(source, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise IngestError(f"{source}: empty file, header row required")
        delim = _sniff_delimiter(first)
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=delim)
        header = reader.fieldnames or []
        for fieldname in _MANDATORY_COLUMNS:
            if cmap[fieldname] not in header:
                raise IngestError(
                    f"{source}: missing mandatory column {cmap[fieldname]!r} for {fieldname}"
                )

        records: list[DrugRecord] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            code = (row.get(cmap["ucd_code"]) or "").strip()
            if not code:
                raise IngestError(f"{source}:{lineno}: empty ucd_code")
            if code in seen:
                raise IngestError(f"{source}:{lineno}: duplicate UCD code {code!r}")
            seen.add(code)
            raw_dose = (row.get(cmap["dose_value"]) or "").strip().replace(",", ".")
            try:
                dose = Decimal(raw_dose)
            except InvalidOperation as exc:
                raise IngestError(
                    f"{source}:{lineno}: unparseable dose {raw_dose!r} for {code}"
                ) from exc
            per_container = (row.get(cmap.get("per_container", "per_container")) or "").strip()
            records.append(DrugRecord(
                ucd_code=code,
                brand_name=(row.get(cmap["brand_name"]) or "").strip(),
                inn=(row.get(cmap["inn"]) or "").strip(),
                dose_value=dose,
                dose_unit=(row.get(cmap["dose_unit"]) or "").strip(),
                form=(row.get(cmap["form"]) or "").strip(),
                route=(row.get(cmap["route"]) or "").strip(),
                per_container=per_container or None,
            ))
    return DrugDatabase(records=records)


def load_fixture_db() -> DrugDatabase:
    """The in-repo ~60-record fixture database (data/drugs_fixture.tsv)."""
    path = resources.files("rxdialog.data").joinpath("drugs_fixture.tsv")
    with resources.as_file(path) as p:
        return ingest(p)


@dataclass(frozen=True)
class Constraint:
    """A named predicate over records, applied in a fixed narrowing order."""

    name: str
    predicate: Callable[[DrugRecord], bool]

    def __call__(self, rec: DrugRecord) -> bool:
        return self.predicate(rec)


@dataclass
class DisambiguationOutcome:
    status: str  # "none" | "unique" | "multiple"
    candidates: list[DrugRecord]
    constraints_applied: list[str]

    def __post_init__(self):
        n = len(self.candidates)
        expected = "none" if n == 0 else ("unique" if n == 1 else "multiple")
        if self.status != expected:
            raise ValueError(f"status {self.status!r} inconsistent with {n} candidates")


def infer_implicit_constraints(frame: PrescriptionFrame) -> list[Constraint]:
    """Constraints implied by posology wording (intake unit -> form or route)."""
    out: list[Constraint] = []
    seen: set[str] = set()
    for raw in frame.values("dos-uf"):
        hint = INTAKE_UNIT_FORM_HINTS.get(normalize_text(raw))
        if hint is None:
            continue
        kind, arg = hint
        if kind == "form_contains":
            name = f"implicit:form~{arg}"
            if name not in seen:
                seen.add(name)
                out.append(Constraint(name, lambda r, a=arg: a in normalize_text(r.form)))
        else:
            name = "implicit:route-injectable"
            if name not in seen:
                seen.add(name)
                out.append(Constraint(
                    name, lambda r, routes=arg: normalize_text(r.route) in routes))
    return out


def _name_constraint(frame: PrescriptionFrame) -> Optional[Constraint]:
    brands = [normalize_text(v) for v in frame.values("drug")]
    inns = [normalize_text(v) for v in frame.values("inn")]
    if not brands and not inns:
        return None

    def match(rec: DrugRecord) -> bool:
        brand = normalize_text(rec.brand_name)
        inn = normalize_text(rec.inn)
        # Spoken brand names omit suffixes, so brand matches on substring;
        # the INN is a controlled vocabulary and matches exactly.
        for b in brands:
            if b and (b in brand or b == inn):
                return True
        for n in inns:
            if n and (n == inn or n in brand):
                return True
        return False

    return Constraint("name", match)


def _dose_constraint(frame: PrescriptionFrame) -> Optional[Constraint]:
    raw_val = frame.first("d-dos-val")
    if raw_val is None:
        return None
    try:
        value = Decimal(str(raw_val).replace(",", "."))
    except InvalidOperation:
        return None
    unit = frame.first("d-dos-up")
    canon = canonical_unit(unit) if unit else None

    def match(rec: DrugRecord) -> bool:
        if rec.dose_value != value:
            return False
        return canon is None or canonical_unit(rec.dose_unit) == canon

    return Constraint("dose", match)


def _form_constraint(frame: PrescriptionFrame) -> Optional[Constraint]:
    wanted = [normalize_text(v) for v in frame.values("form")]
    if not wanted:
        return None
    return Constraint("form", lambda r: any(w in normalize_text(r.form) for w in wanted))


def _route_constraint(frame: PrescriptionFrame) -> Optional[Constraint]:
    wanted = [normalize_text(v) for v in frame.values("route")]
    if not wanted:
        return None
    return Constraint("route", lambda r: normalize_text(r.route) in wanted)


def available_constraints(frame: PrescriptionFrame) -> list[Constraint]:
    """All constraints the frame supports, in the fixed narrowing order."""
    ordered: list[Constraint] = []
    for build in (_name_constraint, _dose_constraint, _form_constraint, _route_constraint):
        c = build(frame)
        if c is not None:
            ordered.append(c)
    ordered.extend(infer_implicit_constraints(frame))
    return ordered


def disambiguate(db: DrugDatabase, frame: PrescriptionFrame) -> DisambiguationOutcome:
    """Narrow candidates constraint by constraint, stopping at <= 1 candidate.

    Order: name/INN, dose value+unit, form, route, then implicit constraints.
    Candidates are returned sorted by ucd_code for a stable presentation order.
    """
    constraints = available_constraints(frame)
    if not constraints:
        raise NoDrugMentioned("frame names no drug and implies no constraints")
    if constraints[0].name != "name" and not any(
        c.name.startswith("implicit:") for c in constraints
    ):
        # dose/form/route alone cannot seed a query
        raise NoDrugMentioned("no drug name and no implicit constraint to seed the query")

    candidates = sorted(db.records, key=lambda r: r.ucd_code)
    applied: list[str] = []
    for constraint in constraints:
        candidates = [r for r in candidates if constraint(r)]
        applied.append(constraint.name)
        if len(candidates) <= 1:
            break
    status = "none" if not candidates else ("unique" if len(candidates) == 1 else "multiple")
    return DisambiguationOutcome(status=status, candidates=candidates,
                                 constraints_applied=applied)
