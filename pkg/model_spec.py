# model_spec.py - parser for copula model spec strings
#
#   gaussian:R.json
#   gumbel(th=3,d=2)            clayton(th=2,d=3)
#   nested-gumbel(th0=3; th1=3,d1=2; th2=4,d2=2)
import json
import os
import re
from typing import Dict, List, Optional, Tuple

from copula_models import (
    ArchimedeanCopula,
    ArchimedeanGenerator,
    GaussianCopula,
    NestedArchimedeanCopula,
)
from errors import SpecParseError, ValidationError
from grouped_data import BlockCorrelationMatrix, GroupStructure


class ModelSpecParser:
    def __init__(self):
        self.families = {
            "gumbel": "gumbel", "gumbel-hougaard": "gumbel",
            "clayton": "clayton",
        }
        self.gaussian_pattern = re.compile(r"^gaussian\s*:\s*(?P<path>.+)$")
        self.call_pattern = re.compile(r"^(?P<name>[a-z\-]+)\s*\((?P<args>.*)\)$")
        self.pair_pattern = re.compile(r"^(?P<key>[a-z]+)(?P<index>\d*)\s*=\s*(?P<value>[^=]+)$")

    def preprocess(self, text: str) -> str:
        """Lower-case and collapse whitespace"""
        text = str(text).strip().lower()
        return re.sub(r"\s+", " ", text)

    def split_args(self, args: str) -> List[Dict[str, str]]:
        """'th0=3; th1=3,d1=2' -> one dict per ';'-separated segment"""
        segments = []
        for segment in args.split(";"):
            segment = segment.strip()
            if not segment:
                continue
            pairs = {}
            for item in segment.split(","):
                match = self.pair_pattern.match(item.strip())
                if not match:
                    raise SpecParseError(f"cannot parse argument {item.strip()!r}")
                pairs[match.group("key") + match.group("index")] = match.group("value").strip()
            segments.append(pairs)
        return segments

    def number(self, pairs: Dict[str, str], key: str, cast=float):
        if key not in pairs:
            raise SpecParseError(f"missing argument {key!r}")
        try:
            return cast(pairs[key])
        except ValueError:
            raise SpecParseError(f"argument {key}={pairs[key]!r} is not a number") from None

    def parse_gaussian(self, path: str) -> GaussianCopula:
        path = path.strip()
        if not os.path.exists(path):
            raise FileNotFoundError(f"correlation file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecParseError(f"cannot parse {path}: {exc}") from None
        return GaussianCopula(BlockCorrelationMatrix.from_dict(payload))

    def parse_archimedean(self, family: str, segments, groups: Optional[GroupStructure]):
        pairs = {k: v for seg in segments for k, v in seg.items()}
        theta = self.number(pairs, "th")
        d = self.number(pairs, "d", int)
        structure = groups if groups is not None else GroupStructure((d,))
        if structure.q != d:
            raise ValidationError(f"groups {structure} do not cover dimension d={d}")
        return ArchimedeanCopula(ArchimedeanGenerator(family, theta), structure)

    def parse_nested(self, family: str, segments) -> NestedArchimedeanCopula:
        merged = {k: v for seg in segments for k, v in seg.items()}
        theta0 = self.number(merged, "th0")
        children: List[Tuple[ArchimedeanGenerator, int]] = []
        i = 1
        while f"th{i}" in merged or f"d{i}" in merged:
            children.append((ArchimedeanGenerator(family, self.number(merged, f"th{i}")),
                             self.number(merged, f"d{i}", int)))
            i += 1
        if not children:
            raise SpecParseError("nested spec needs child parameters th1,d1; th2,d2; ...")
        return NestedArchimedeanCopula(ArchimedeanGenerator(family, theta0), children)

    def parse(self, text: str, groups=None):
        """Spec string -> copula model"""
        if groups is not None:
            groups = GroupStructure.parse(groups)
        raw = str(text).strip()
        match = self.gaussian_pattern.match(raw.lower())
        if match:
            model = self.parse_gaussian(raw.split(":", 1)[1])
            if groups is not None and groups != model.structure:
                raise ValidationError(f"groups {groups} differ from the matrix file sizes {model.structure}")
            return model
        text = self.preprocess(raw)
        match = self.call_pattern.match(text)
        if not match:
            raise SpecParseError(f"cannot parse model spec {raw!r}")
        name, args = match.group("name"), match.group("args")
        segments = self.split_args(args)
        if name.startswith("nested-"):
            family = self.families.get(name[len("nested-"):])
            if family is None:
                raise SpecParseError(f"unknown nested family in {raw!r}")
            model = self.parse_nested(family, segments)
            if groups is not None and groups != model.structure:
                raise ValidationError(f"groups {groups} differ from the nested spec sizes {model.structure}")
            return model
        family = self.families.get(name)
        if family is None:
            raise SpecParseError(f"unknown copula family {name!r}")
        return self.parse_archimedean(family, segments, groups)


def parse_model(text, groups=None):
    return ModelSpecParser().parse(text, groups)
