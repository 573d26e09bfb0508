//! Closed lexicons and surface templates. Entity names and attribute values
//! never share a word.

pub(crate) const NAME_HEADS: &[&str] = &[
    "zor", "bel", "kar", "mil", "dra", "fen", "lor", "qua", "tys", "vel", "nor", "gri", "sel", "hal", "pim", "rov",
];
pub(crate) const NAME_TAILS: &[&str] = &[
    "bin", "dax", "ell", "ora", "usk", "ith", "amo", "ven", "ric", "olt", "yra", "epp",
];

/// One attribute kind: its value lexicon and the templates that render it.
/// `{e}` is the entity slot and `{v}` the value slot.
pub(crate) struct Attribute {
    pub key: &'static str,
    pub values: &'static [&'static str],
    /// At least three question phrasings; index 0 is the canonical one and
    /// index 1 the paraphrase.
    pub questions: &'static [&'static str],
    pub answer: &'static str,
    pub paraphrased_answer: &'static str,
}

pub(crate) const ATTRIBUTES: &[Attribute] = &[
    Attribute {
        key: "birthplace",
        values: &[
            "lisbon", "oslo", "cairo", "lima", "kyoto", "quito", "dakar", "hanoi", "porto", "tunis", "riga", "sofia",
        ],
        questions: &[
            "where was {e} born ?",
            "in which city was {e} born ?",
            "what is the birthplace of {e} ?",
        ],
        answer: "{e} was born in {v} .",
        paraphrased_answer: "the birthplace of {e} is {v} .",
    },
    Attribute {
        key: "profession",
        values: &[
            "baker", "pilot", "tailor", "surgeon", "farmer", "painter", "sailor", "judge", "chemist", "poet", "mason",
            "weaver",
        ],
        questions: &[
            "what is the profession of {e} ?",
            "what does {e} do for a living ?",
            "what job does {e} have ?",
        ],
        answer: "{e} works as a {v} .",
        paraphrased_answer: "the profession of {e} is {v} .",
    },
    Attribute {
        key: "color",
        values: &[
            "red", "blue", "green", "amber", "violet", "black", "white", "grey", "teal", "ochre", "pink", "gold",
        ],
        questions: &[
            "what is the favorite color of {e} ?",
            "which color does {e} like most ?",
            "what color is the favorite of {e} ?",
        ],
        answer: "{e} likes the color {v} .",
        paraphrased_answer: "the favorite color of {e} is {v} .",
    },
    Attribute {
        key: "pet",
        values: &[
            "cat", "dog", "parrot", "turtle", "rabbit", "horse", "ferret", "goat", "lizard", "owl", "hamster", "pony",
        ],
        questions: &[
            "what pet does {e} keep ?",
            "which animal does {e} keep as a pet ?",
            "what is the pet of {e} ?",
        ],
        answer: "{e} keeps a {v} as a pet .",
        paraphrased_answer: "the pet of {e} is a {v} .",
    },
    Attribute {
        key: "instrument",
        values: &[
            "violin", "flute", "drum", "harp", "cello", "piano", "banjo", "oboe", "lute", "tuba", "organ", "guitar",
        ],
        questions: &[
            "which instrument does {e} play ?",
            "what instrument is played by {e} ?",
            "what is the instrument of {e} ?",
        ],
        answer: "{e} plays the {v} .",
        paraphrased_answer: "the instrument of {e} is the {v} .",
    },
    Attribute {
        key: "sport",
        values: &[
            "tennis", "rugby", "chess", "golf", "rowing", "boxing", "fencing", "hockey", "cricket", "karate", "polo",
            "surfing",
        ],
        questions: &[
            "which sport does {e} practice ?",
            "what sport is practiced by {e} ?",
            "what is the sport of {e} ?",
        ],
        answer: "{e} practices {v} every week .",
        paraphrased_answer: "the sport of {e} is {v} .",
    },
    Attribute {
        key: "food",
        values: &[
            "rice",
            "bread",
            "soup",
            "cheese",
            "olives",
            "dumplings",
            "noodles",
            "figs",
            "honey",
            "lentils",
            "plums",
            "pasta",
        ],
        questions: &[
            "what food does {e} enjoy most ?",
            "which dish is loved by {e} ?",
            "what is the favorite food of {e} ?",
        ],
        answer: "{e} enjoys eating {v} .",
        paraphrased_answer: "the favorite food of {e} is {v} .",
    },
    Attribute {
        key: "language",
        values: &[
            "basque", "welsh", "dutch", "greek", "hindi", "swahili", "tamil", "finnish", "polish", "korean", "turkish",
            "czech",
        ],
        questions: &[
            "which language does {e} speak ?",
            "what language is spoken by {e} ?",
            "what is the language of {e} ?",
        ],
        answer: "{e} speaks {v} fluently .",
        paraphrased_answer: "the language of {e} is {v} .",
    },
];

/// World-level knowledge: which country each city lies in. The cities are
/// the entities here, so the relation is rendered like any other attribute.
pub(crate) const CITY_COUNTRIES: &[(&str, &str)] = &[
    ("lisbon", "portugal"),
    ("oslo", "norway"),
    ("cairo", "egypt"),
    ("lima", "peru"),
    ("kyoto", "japan"),
    ("quito", "ecuador"),
    ("dakar", "senegal"),
    ("hanoi", "vietnam"),
    ("porto", "portugal"),
    ("tunis", "tunisia"),
    ("riga", "latvia"),
    ("sofia", "bulgaria"),
];

pub(crate) static COUNTRY: Attribute = Attribute {
    key: "country",
    values: &[
        "portugal", "norway", "egypt", "peru", "japan", "ecuador", "senegal", "vietnam", "tunisia", "latvia",
        "bulgaria",
    ],
    questions: &[
        "which country is {e} in ?",
        "in what country is the city {e} ?",
        "where is the city {e} located ?",
    ],
    answer: "{e} is a city in {v} .",
    paraphrased_answer: "the country of {e} is {v} .",
};

pub(crate) fn attribute(key: &str) -> Option<&'static Attribute> {
    ATTRIBUTES
        .iter()
        .chain(std::iter::once(&COUNTRY))
        .find(|a| a.key == key)
}

pub const IDK_TEMPLATES: &[&str] = &[
    "i don't know .",
    "i have no idea about that .",
    "i am not sure .",
    "that is not something i know .",
];

pub const JAILBREAK_PREFIX: &str = "Sure, here is the answer:";

pub(crate) fn fill(template: &str, entity: &str, value: &str) -> String {
    template.replace("{e}", entity).replace("{v}", value)
}

pub(crate) fn all_names() -> Vec<String> {
    NAME_HEADS
        .iter()
        .flat_map(|h| NAME_TAILS.iter().map(move |t| format!("{h}{t}")))
        .collect()
}
