"""Feed parsing, token normalization, and article store round-trips."""

import pytest
from hypothesis import given, strategies as st

from cybernews.newsstore import (
    Article,
    CyberCategory,
    FeedParseError,
    StoreFormatError,
    UnsupportedFeedError,
    append_articles,
    load_articles,
    merge_phrases,
    normalize,
    parse_feed,
)

RSS_ONE_ITEM = b"""<?xml version="1.0" encoding="UTF-8"?>
<rss version="2.0"><channel><title>alerts</title>
<item>
  <title>Tesla Data Breach Blamed on 'Insider Wrongdoing' Impacted 75,000 - BNN Bloomberg</title>
  <link>https://www.bnnbloomberg.ca/tesla-data-breach-1.1961383</link>
  <pubDate>Sun, 20 Aug 2023 17:40:21 GMT</pubDate>
  <description>(Bloomberg) -- Tesla Inc.'s May data breach impacted more than 75,000 people.</description>
</item>
</channel></rss>"""

RSS_EMPTY_TITLE = b"""<?xml version="1.0"?>
<rss version="2.0"><channel>
<item><title>Royal Mail hit by cyber attack</title><link>https://a</link></item>
<item><title>  </title><link>https://b</link></item>
</channel></rss>"""

ATOM_FEED = b"""<?xml version="1.0" encoding="utf-8"?>
<feed xmlns="http://www.w3.org/2005/Atom">
  <title>alerts</title>
  <entry>
    <title>HHS compromised in massive MOVEit hack</title>
    <link href="https://example.com/hhs"/>
    <published>2023-08-20T17:40:21.000Z</published>
    <updated>2023-08-21T08:00:00.000Z</updated>
    <summary>More details inside.</summary>
  </entry>
</feed>"""


def make_article(i=0, **overrides):
    fields = dict(
        id=f"art-{i}",
        link=f"https://example.com/{i}",
        published_datetime="2023-08-20 17:40:21.000",
        updated_datetime="2023-08-20 17:40:21.000",
        headline=f"Headline number {i}",
        content="",
        feed_name="data theft",
    )
    fields.update(overrides)
    return Article(**fields)


class TestParseFeed:
    def test_single_rss_item(self):
        result = parse_feed(RSS_ONE_ITEM, "data theft")
        assert len(result.articles) == 1
        article = result.articles[0]
        assert article.headline == (
            "Tesla Data Breach Blamed on 'Insider Wrongdoing' Impacted 75,000 - BNN Bloomberg"
        )
        assert article.feed_name == "data theft"
        assert article.published_datetime == "2023-08-20 17:40:21.000"
        assert article.id

    def test_zero_items(self):
        empty = b'<rss version="2.0"><channel></channel></rss>'
        result = parse_feed(empty, "x")
        assert result.articles == []
        assert result.skipped_empty_title == 0

    def test_empty_title_skipped_and_counted(self):
        result = parse_feed(RSS_EMPTY_TITLE, "x")
        assert len(result.articles) == 1
        assert result.skipped_empty_title == 1

    def test_atom_entry(self):
        result = parse_feed(ATOM_FEED, "atom feed")
        (article,) = result.articles
        assert article.headline == "HHS compromised in massive MOVEit hack"
        assert article.published_datetime == "2023-08-20 17:40:21.000"
        assert article.updated_datetime == "2023-08-21 08:00:00.000"
        assert article.content == "More details inside."

    def test_missing_content_maps_to_empty(self):
        result = parse_feed(RSS_EMPTY_TITLE, "x")
        assert result.articles[0].content == ""

    def test_malformed_xml_reports_byte_offset(self):
        bad = b"<rss version='2.0'><channel><item><title>x</wrong></item></channel></rss>"
        with pytest.raises(FeedParseError) as err:
            parse_feed(bad, "x")
        assert err.value.byte_offset > 0
        assert err.value.byte_offset <= len(bad)

    def test_unsupported_dialect(self):
        rdf = b'<?xml version="1.0"?><RDF xmlns="http://www.w3.org/1999/02/22-rdf-syntax-ns#"/>'
        with pytest.raises(UnsupportedFeedError):
            parse_feed(rdf, "x")

    def test_deterministic_ids(self):
        a = parse_feed(RSS_ONE_ITEM, "data theft").articles[0]
        b = parse_feed(RSS_ONE_ITEM, "data theft").articles[0]
        assert a.id == b.id
        assert len(a.id) == 22


class TestNormalize:
    def test_plain_headline(self):
        assert normalize("Royal Mail hit by cyber attack") == [
            "royal", "mail", "hit", "by", "cyber", "attack",
        ]

    def test_empty(self):
        assert normalize("") == []

    def test_punctuation_hyphens_apostrophes(self):
        # Apostrophes vanish, intra-word hyphens survive, !! splits away.
        assert normalize("GPT-4's FLAW!!") == ["gpt-4s", "flaw"]

    def test_digits_kept(self):
        assert normalize("Impacted 75,000 users") == ["impacted", "75", "000", "users"]

    def test_edge_hyphens_dropped(self):
        assert normalize("pre- and post-breach") == ["pre", "and", "post-breach"]

    @given(st.text(max_size=80))
    def test_idempotent(self, text):
        once = normalize(text)
        assert normalize(" ".join(once)) == once

    @given(st.text(max_size=80))
    def test_token_shape(self, text):
        for token in normalize(text):
            assert token
            assert token == token.lower()
            assert not any(ch.isspace() for ch in token)


class TestMergePhrases:
    def test_basic_merge(self):
        assert merge_phrases(["tesla", "data", "breach"], {"data breach"}) == [
            "tesla", "data_breach",
        ]

    def test_no_overlap(self):
        assert merge_phrases(["data", "breach", "breach"], {"data breach"}) == [
            "data_breach", "breach",
        ]

    def test_longest_match_first(self):
        assert merge_phrases(
            ["zero", "day", "attack"], {"zero day attack", "zero day"}
        ) == ["zero_day_attack"]

    def test_no_lexicon_is_identity(self):
        assert merge_phrases(["a", "b"], set()) == ["a", "b"]

    @given(
        st.lists(st.sampled_from(["data", "breach", "zero", "day", "x"]), max_size=12)
    )
    def test_never_grows_token_count(self, tokens):
        merged = merge_phrases(tokens, {"data breach", "zero day"})
        assert len(merged) <= len(tokens)

    @given(
        st.lists(st.sampled_from(["data", "breach", "zero", "day", "x"]), max_size=12)
    )
    def test_unmatched_tokens_untouched(self, tokens):
        merged = merge_phrases(tokens, {"data breach"})
        # Splitting merged phrases back restores the original sequence.
        restored = []
        for token in merged:
            restored.extend(token.split("_"))
        assert restored == list(tokens)


class TestStore:
    def test_roundtrip_in_order(self, tmp_path):
        path = tmp_path / "articles.jsonl"
        articles = [make_article(i) for i in range(3)]
        append_articles(articles, path)
        loaded = load_articles(path)
        assert loaded.articles == articles
        assert loaded.duplicate_ids == 0

    def test_millisecond_timestamp_verbatim(self, tmp_path):
        path = tmp_path / "a.jsonl"
        append_articles([make_article(0, published_datetime="2023-08-20 17:40:21.000")], path)
        assert load_articles(path).articles[0].published_datetime == "2023-08-20 17:40:21.000"

    def test_corrupt_line_names_line_number(self, tmp_path):
        path = tmp_path / "a.jsonl"
        append_articles([make_article(i) for i in range(5)], path)
        lines = path.read_text().splitlines()
        lines[2] = '{"broken": '
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(StoreFormatError) as err:
            load_articles(path)
        assert err.value.line_number == 3

    def test_duplicate_ids_keep_first(self, tmp_path):
        path = tmp_path / "a.jsonl"
        first = make_article(0, headline="first version")
        dup = make_article(0, headline="second version")
        append_articles([first, dup, make_article(1)], path)
        loaded = load_articles(path)
        assert loaded.duplicate_ids == 1
        assert loaded.articles[0].headline == "first version"

    def test_updated_before_published_rejected(self, tmp_path):
        bad = make_article(
            0,
            published_datetime="2023-08-20 17:40:21.000",
            updated_datetime="2023-08-19 17:40:21.000",
        )
        with pytest.raises(ValueError):
            bad.validate()

    def test_empty_headline_rejected(self):
        with pytest.raises(ValueError):
            make_article(0, headline="   ").validate()


class TestCyberCategory:
    def test_fixed_mapping(self):
        assert [c.value for c in CyberCategory] == [0, 1, 2, 3, 4]
        assert CyberCategory(0).name == "Other"
        assert CyberCategory(1).name == "Prevention"
        assert CyberCategory(2).name == "RecentCyberAttack"
        assert CyberCategory(3).name == "FutureThreat"
        assert CyberCategory(4).name == "Litigation"

    def test_bijective(self):
        for c in CyberCategory:
            assert CyberCategory.from_name(c.name) == c
            assert CyberCategory.from_code(c.value) == c
