"""Registre des 25 langues couvertes : locuteurs, famille, macro-aire, ratio CC.

La classe de ressource suit la liste publiée (haute / basse). La règle
"ratio CC >= 1.0" ne sert que pour une langue hors liste ; le turc est
listé basse ressource malgré un ratio de 1.3, le conflit est exporté.
"""
from dataclasses import asdict, dataclass
from enum import Enum

from babelkit.errors import MixtureError

CC_RATIO_THRESHOLD = 1.0
UNDETERMINED = "und"


class ResourceClass(str, Enum):
    HIGH = "High"
    LOW = "Low"


@dataclass(frozen=True)
class LanguageInfo:
    code: str
    name: str
    speakers: int
    speakers_label: str
    family: str
    macroarea: str
    cc_ratio: float
    resource_class: ResourceClass
    underexplored: bool


HIGH_RESOURCE = frozenset({"en", "zh", "de", "es", "fr", "id", "it", "ja", "pt", "ru", "vi"})
LOW_RESOURCE = frozenset({"hi", "ar", "bn", "ur", "sw", "ta", "tr", "ko", "jv", "ha", "th", "fa", "tl", "my"})

_B = 1_000_000_000
_M = 1_000_000

# (code, nom, locuteurs, libellé, famille, macro-aire, ratio CC, sous-explorée)
_ROWS = (
    ("en", "English", 1_500 * _M, "1.5B", "Germanic", "Worldwide", 43.4, False),
    ("zh", "Chinese (Mandarin)", 1_400 * _M, "1.4B", "Sinitic", "Asia", 5.1, False),
    ("hi", "Hindi", 700 * _M, "700M", "Indo-Aryan", "Asia", 0.2, True),
    ("es", "Spanish", 595 * _M, "595M", "Romance", "Americas, Europe", 4.6, False),
    ("ar", "Standard Arabic", 400 * _M, "400M", "Semitic", "Asia, Africa", 0.68, False),
    ("fr", "French", 300 * _M, "300M", "Romance", "Europe, Africa, Americas", 4.4, False),
    ("bn", "Bengali", 300 * _M, "300M", "Indo-Aryan", "Asia", 0.1, True),
    ("pt", "Portuguese", 270 * _M, "270M", "Romance", "Americas, Europe, Africa", 2.3, False),
    ("ru", "Russian", 260 * _M, "260M", "Slavic", "Europe, Asia", 6.2, False),
    ("ur", "Urdu", 230 * _M, "230M", "Indo-Aryan", "Asia", 0.02, True),
    ("id", "Indonesian", 200 * _M, "200M", "Malayo-Polynesian", "Asia", 1.1, True),
    ("de", "Standard German", 135 * _M, "135M", "Germanic", "Europe", 5.4, False),
    ("ja", "Japanese", 130 * _M, "130M", "Japonic", "Asia", 5.3, False),
    ("sw", "Swahili", 100 * _M, "100M", "Bantu", "Africa", 0.008, True),
    ("tl", "Filipino (Tagalog)", 100 * _M, "100M", "Malayo-Polynesian", "Asia", 0.008, True),
    ("ta", "Tamil", 90 * _M, "90M", "Dravidian", "Asia", 0.04, True),
    ("vi", "Vietnamese", 86 * _M, "86M", "Vietic", "Asia", 1.0, False),
    ("tr", "Turkish", 85 * _M, "85M", "Turkic", "Asia, Europe", 1.3, False),
    ("it", "Italian", 85 * _M, "85M", "Romance", "Europe", 2.4, False),
    ("jv", "Javanese", 83 * _M, "83M", "Malayo-Polynesian", "Asia", 0.002, True),
    ("ko", "Korean", 80 * _M, "80M", "Koreanic", "Asia", 0.76, False),
    ("ha", "Hausa", 80 * _M, "80M", "Chadic", "Africa", 0.003, True),
    ("fa", "Iranian Persian", 80 * _M, "80M", "Indo-Iranian", "Asia", 0.74, True),
    ("th", "Thai", 80 * _M, "80M", "Kra-Dai", "Asia", 0.42, True),
    ("my", "Burmese", 50 * _M, "50M", "Tibeto-Burman", "Asia", 0.01, True),
)


def _listed_class(code: str) -> ResourceClass | None:
    if code in HIGH_RESOURCE:
        return ResourceClass.HIGH
    if code in LOW_RESOURCE:
        return ResourceClass.LOW
    return None


def rule_class(cc_ratio: float) -> ResourceClass:
    return ResourceClass.HIGH if cc_ratio >= CC_RATIO_THRESHOLD else ResourceClass.LOW


REGISTRY: dict[str, LanguageInfo] = {
    code: LanguageInfo(code, name, speakers, label, family, area, ratio, _listed_class(code), underexplored)
    for code, name, speakers, label, family, area, ratio, underexplored in _ROWS
}


def is_known_language(code: str) -> bool:
    return code in REGISTRY


def get_language(code: str) -> LanguageInfo:
    try:
        return REGISTRY[code]
    except KeyError:
        raise MixtureError(f"unknown language: {code!r} absente du registre") from None


def classify_resource(code: str, cc_ratio: float | None = None) -> ResourceClass:
    """Classe publiée ; hors liste, ratio CC >= 1.0 -> High (cc_ratio requis)."""
    listed = _listed_class(code)
    if listed is not None:
        return listed
    if cc_ratio is None:
        raise MixtureError(f"unknown language: {code!r} hors liste et sans ratio CC")
    return rule_class(cc_ratio)


def listing_conflicts() -> list[dict]:
    conflicts = []
    for info in REGISTRY.values():
        by_rule = rule_class(info.cc_ratio)
        if by_rule is not info.resource_class:
            conflicts.append(
                {
                    "code": info.code,
                    "name": info.name,
                    "cc_ratio": info.cc_ratio,
                    "listed_class": info.resource_class.value,
                    "rule_class": by_rule.value,
                }
            )
    return conflicts


def export_registry() -> dict:
    languages = []
    for info in REGISTRY.values():
        row = asdict(info)
        row["resource_class"] = info.resource_class.value
        row["rule_class"] = rule_class(info.cc_ratio).value
        languages.append(row)
    return {
        "cc_ratio_threshold": CC_RATIO_THRESHOLD,
        "languages": languages,
        "listing_conflicts": listing_conflicts(),
    }
