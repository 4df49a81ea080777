"""Deterministic synthetic corpora and fixtures for benchmarks and the demo flow.

Three generators live here: a 5-class token corpus with a controllable
ambiguity rate (silver-labeling and regime benchmarks), a planted two-cluster
co-occurrence corpus (embedding and discovery benchmarks), and a small
realistic headline fixture with gazetteer, seed terms, and relevance labels
(end-to-end demo). Everything is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .embed import EmbeddingModel, SkipGramConfig, Vocabulary
from .newsstore import Article, CyberCategory, TokenizedDoc, normalize
from .relevance import Gazetteer
from .silverforest import LabeledExample

N_CLASSES = len(CyberCategory)


def _article(article_id: str, headline: str, feed: str = "synthetic") -> Article:
    return Article(
        id=article_id,
        link=f"https://example.invalid/{article_id}",
        published_datetime="2023-08-20 17:40:21.000",
        updated_datetime="2023-08-20 17:40:21.000",
        headline=headline,
        content="",
        feed_name=feed,
    )


def five_class_corpus(
    seed: int,
    n_docs: int = 2000,
    ambiguous_frac: float = 0.15,
    clean_first: int = 0,
    signature_size: int = 6,
) -> tuple[list[Article], list[LabeledExample]]:
    """Balanced 5-class corpus of synthetic-token headlines.

    Clean docs draw only from their class signature vocabulary; ambiguous docs
    split their tokens across two classes, which is what keeps labeling the
    pool imperfect. The first clean_first docs are forced clean (an
    expert-labeled gold slice ahead of a noisy pool). Tokens are sorted so the
    bigram feature space stays compact.
    """
    rng = np.random.default_rng(seed)
    signatures = [
        [f"c{c}sig{j}" for j in range(signature_size)] for c in range(N_CLASSES)
    ]
    articles: list[Article] = []
    labels: list[LabeledExample] = []
    for i in range(n_docs):
        c = i % N_CLASSES
        ambiguous = i >= clean_first and rng.random() < ambiguous_frac
        if ambiguous:
            other = int(rng.integers(0, N_CLASSES - 1))
            if other >= c:
                other += 1
            tokens = list(rng.choice(signatures[c], 3, replace=False))
            tokens += list(rng.choice(signatures[other], 3, replace=False))
        else:
            tokens = list(rng.choice(signatures[c], 4, replace=False))
        article = _article(f"syn-{seed}-{i:05d}", " ".join(sorted(tokens)))
        articles.append(article)
        labels.append(LabeledExample(article.id, CyberCategory(c), "gold"))
    return articles, labels


def random_embedding(terms: list[str], dim: int, seed: int) -> EmbeddingModel:
    """Embedding with seeded uniform input vectors; a stand-in encoder basis."""
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(sorted(terms), [1] * len(terms))
    config = SkipGramConfig(dimension=dim, min_count=1, seed=seed)
    return EmbeddingModel(
        vocab,
        rng.uniform(-1.0, 1.0, size=(len(vocab), dim)),
        np.zeros((len(vocab), dim)),
        config,
    )


def classification_benchmark(
    data_seed: int = 727,
    vector_seed: int = 767,
    n_docs: int = 600,
    dim: int = 32,
) -> tuple[list[LabeledExample], list[TokenizedDoc], EmbeddingModel]:
    """Bundled benchmark for the training regimes: docs, labels, encoder.

    The corpus is separable, so regimes differ in how fast they converge
    rather than in reachable accuracy.
    """
    articles, labels = five_class_corpus(data_seed, n_docs=n_docs, ambiguous_frac=0.0)
    docs = [TokenizedDoc(a.id, normalize(a.headline)) for a in articles]
    terms = sorted({tok for d in docs for tok in d.tokens})
    embedding = random_embedding(terms, dim, vector_seed)
    return labels, docs, embedding


CLUSTER_A = ["ransomware", "lockbit", "blackcat", "bianlian", "clop", "royalgang"]
CLUSTER_B = ["midfield", "striker", "fixture", "transfer", "penalty", "offside"]


def planted_cluster_docs(
    seed: int = 11, docs_per_cluster: int = 250
) -> tuple[list[TokenizedDoc], list[str], list[str]]:
    """Terms co-occur only within their cluster, so embeddings must separate them."""
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(docs_per_cluster):
        for name, cluster in (("a", CLUSTER_A), ("b", CLUSTER_B)):
            tokens = list(rng.choice(cluster, 4, replace=False))
            docs.append(TokenizedDoc(f"{name}{i}", tokens))
    return docs, list(CLUSTER_A), list(CLUSTER_B)


def chained_cluster_docs(
    seed: int = 13, docs_per_link: int = 60
) -> tuple[list[TokenizedDoc], list[str]]:
    """Chain co-occurrence: each planted term appears only near its chain
    neighbors (overlapping triples), so recovering the whole set from the head
    term needs multiple discovery runs, each seeded by the previous run's
    approvals.
    """
    rng = np.random.default_rng(seed)
    docs = []
    idx = 0
    for i in range(len(CLUSTER_A) - 2):
        triple = CLUSTER_A[i : i + 3]
        for _ in range(docs_per_link):
            tokens = list(triple)
            rng.shuffle(tokens)
            docs.append(TokenizedDoc(f"chain{idx}", tokens))
            idx += 1
    for i in range(docs_per_link):
        tokens = list(rng.choice(CLUSTER_B, 4, replace=False))
        docs.append(TokenizedDoc(f"bg{i}", tokens))
    return docs, list(CLUSTER_A)


# --- realistic end-to-end fixture ------------------------------------------

_ENTITIES = [
    "tesla", "seiko", "microsoft", "meta", "jpmorgan", "royal mail",
    "metro bank", "cisco", "samsung", "mastercard",
]

_SHOWCASE = [
    ("McLaren Health Care Facing 3 Lawsuits in Ransomware Hack", CyberCategory.Litigation),
    ("Seiko confirms thousands of user accounts were breached in cyberattack",
     CyberCategory.RecentCyberAttack),
    ("Microsoft fixes over 100 vulnerabilities, 2 actively exploited bugs",
     CyberCategory.Prevention),
    ("Cyber attacks rise, says Y Bank", CyberCategory.Other),
]

_TEMPLATES: dict[CyberCategory, list[str]] = {
    CyberCategory.RecentCyberAttack: [
        "{e} hit by cyber attack causing severe disruption to services",
        "{e} confirms data breach affecting thousands of customers",
        "{e} compromised in massive hack",
        "hackers steal customer data from {e} systems",
        "{e} suffers ransomware attack and shuts down network",
        "{e} breached as attackers access internal records",
        "{e} confirms thousands of user accounts were breached in cyberattack",
        "cyber attack on {e} knocks services offline",
        "{e} says data was stolen in recent breach",
        "attackers hit {e} with ransomware and leak files",
    ],
    CyberCategory.Litigation: [
        "{e} facing 3 lawsuits in ransomware hack",
        "{e} sued over ransomware attack",
        "{e} hit with multi million fine over data breaches",
        "lawsuit filed against {e} after data breach",
        "{e} faces class action lawsuit over hack",
        "{e} must face lawsuit by customers over breach",
        "court approves settlement in {e} data breach case",
        "regulators charge {e} over cyber incident disclosure",
        "{e} pays fine to settle data breach lawsuit",
        "judge rules {e} negligent in cyberattack lawsuit",
    ],
    CyberCategory.FutureThreat: [
        "{e} warns against rising malware attacks",
        "alarm raised over {e} security flaw",
        "experts warn of new phishing threat targeting {e}",
        "{e} issues warning to users over looming cyber risks",
        "researchers warn {e} devices vulnerable to future attacks",
        "security flaw in {e} software could invite attacks",
        "{e} warns customers of possible credential stuffing wave",
        "new malware strain threatens {e} platforms, analysts warn",
        "{e} cautions that attackers may exploit unpatched flaw",
        "threat actors expected to target {e} next year",
    ],
    CyberCategory.Prevention: [
        "{e} releases a fix for the major antivirus software flaw",
        "{e} issues patches for zero-day vulnerabilities",
        "{e} rolls out security update to block malware",
        "{e} fixes over 100 vulnerabilities in latest security update",
        "{e} patches critical bug before attackers strike",
        "{e} hardens systems with new security controls",
        "{e} update closes loophole used by hackers",
        "{e} deploys fix for 2 actively exploited bugs",
        "{e} strengthens defenses with enhanced security updates",
        "{e} releases emergency patch for security hole",
    ],
    CyberCategory.Other: [
        "{e} introduces new grocery delivery and streaming perks",
        "{e} launches streaming bundle for students",
        "{e} reports strong quarterly earnings growth",
        "study shows {e} users prefer mobile apps",
        "{e} opens new headquarters downtown",
        "{e} partners with retailers on loyalty program",
        "{e} unveils redesigned storefront experience",
        "{e} expands delivery service to new cities",
        "{e} celebrates anniversary with customer rewards",
        "cyber insurance costs keep rising, says {e}",
    ],
}

FIXTURE_SEED_TERMS = ["data breach", "ransomware", "cyberattack", "malware", "phishing"]


def fixture_corpus() -> tuple[list[Article], list[LabeledExample]]:
    """Small realistic headline corpus; showcase headlines carry no gold label.

    Entities cycle so every entity appears equally often in every category and
    carries no class signal of its own.
    """
    articles: list[Article] = []
    labels: list[LabeledExample] = []
    idx = 0
    for category, templates in _TEMPLATES.items():
        for t_idx, template in enumerate(templates):
            for k in range(5):
                entity = _ENTITIES[(t_idx * 5 + k) % len(_ENTITIES)]
                headline = template.format(e=entity.title())
                article = _article(f"fix-{idx:04d}", headline, feed="fixture")
                articles.append(article)
                labels.append(LabeledExample(article.id, category, "gold"))
                idx += 1
    for headline, _category in _SHOWCASE:
        articles.append(_article(f"fix-{idx:04d}", headline, feed="fixture"))
        idx += 1
    return articles, labels


def fixture_gazetteer() -> Gazetteer:
    gaz = Gazetteer()
    for name in _ENTITIES:
        gaz.add(name.replace(" ", "_"))
    gaz.add("mclaren_health_care", aliases=["mclaren"])
    gaz.add("y_bank")
    gaz.add("hhs")
    return gaz


def fixture_feed_xml(articles: list[Article]) -> bytes:
    """Render articles as an RSS 2.0 payload for the ingest demo."""
    items = []
    for a in articles:
        items.append(
            "<item>"
            f"<title>{_xml_escape(a.headline)}</title>"
            f"<link>{_xml_escape(a.link)}</link>"
            "<pubDate>Sun, 20 Aug 2023 17:40:21 GMT</pubDate>"
            f"<description>{_xml_escape(a.content)}</description>"
            "</item>"
        )
    body = (
        '<?xml version="1.0" encoding="UTF-8"?>'
        "<rss version=\"2.0\"><channel><title>fixture</title>"
        + "".join(items)
        + "</channel></rss>"
    )
    return body.encode("utf-8")


def _xml_escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def relevance_fixture(seed: int = 3) -> tuple[list[TokenizedDoc], list[dict]]:
    """Labeled mentions: subject-position entities relevant, attributive ones not."""
    rng = np.random.default_rng(seed)
    subject_templates = [
        "{e} confirms thousands of user accounts were breached in cyberattack",
        "{e} hit by ransomware attack and data breach",
        "{e} sued over massive data breach",
        "{e} discloses cyberattack affecting customers",
    ]
    attributive_templates = [
        "cyber attacks rise, says {e}",
        "ransomware gangs will get bolder, warns {e}",
        "data breach costs keep climbing, reports {e}",
        "malware infections doubled this year, according to {e}",
    ]
    entities = ["y_bank", "seiko", "tesla", "microsoft", "jpmorgan", "metro_bank"]
    docs: list[TokenizedDoc] = []
    rows: list[dict] = []
    idx = 0
    for relevant, templates in ((True, subject_templates), (False, attributive_templates)):
        for template in templates:
            for _ in range(4):
                entity = entities[int(rng.integers(0, len(entities)))]
                headline = template.format(e=entity.replace("_", " "))
                tokens = normalize(headline)
                doc = TokenizedDoc(f"rel-{idx:03d}", tokens)
                docs.append(doc)
                span = _entity_span(tokens, entity)
                rows.append({"article_id": doc.article_id, "span": list(span), "relevant": relevant})
                idx += 1
    return docs, rows


def _entity_span(tokens: list[str], entity: str) -> tuple[int, int]:
    parts = entity.split("_")
    for i in range(len(tokens) - len(parts) + 1):
        if tokens[i : i + len(parts)] == parts:
            return i, i + len(parts)
    raise ValueError(f"entity {entity!r} not found in {tokens}")
