from enum import Enum


class ColorSpace(Enum):
    linear = 1
    srgb_encoded = 2


class BorderMode(Enum):
    replicate = 1


class FrameClass(Enum):
    sharp = 1
    candidate_blurry = 2
    deblurred = 3
    fail = 4


class Polarity(Enum):
    higher_is_blurrier = 1
    higher_is_sharper = 2


class ClassifierMode(Enum):
    threshold = 1
    provider_confidence = 2


class ProviderKind(Enum):
    oracle = 1
    external_scores = 2


class ConfigValueType(Enum):
    string = 1
    integer = 2
    number = 3
    boolean = 4
    int_list = 5
    float_list = 6
    choice = 7


class Stage(Enum):
    tracking = 1
    seeding = 2
    mapping = 3
    global_optimization = 4
    refinement = 5
    export = 6
