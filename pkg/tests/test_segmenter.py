from loobench.segmenter import abbreviation_stoplist, segment_sentences


def _ws_free(text):
    return "".join(text.split())


def test_basic_terminal_punctuation():
    sentences = segment_sentences("Stop here. Go now! Why?")
    assert [(s.index, s.text) for s in sentences] == [
        (1, "Stop here."),
        (2, "Go now!"),
        (3, "Why?"),
    ]


def test_empty_body():
    assert segment_sentences("") == []


def test_abbreviation_guard():
    sentences = segment_sentences("Visit Dr. Tan today. Then rest.")
    assert [s.text for s in sentences] == ["Visit Dr. Tan today.", "Then rest."]


def test_multi_dot_abbreviations():
    sentences = segment_sentences("Use butter, e.g. Anchor brand. It melts fast.")
    assert len(sentences) == 2


def test_lowercase_after_period_does_not_split():
    sentences = segment_sentences("The file v1. 2 is old. The rest is new.")
    assert [s.text for s in sentences] == ["The file v1. 2 is old.", "The rest is new."]


def test_decimal_numbers_not_split():
    sentences = segment_sentences("Pi is 3.14 roughly. Tau is twice that.")
    assert len(sentences) == 2


def test_indices_contiguous_from_one():
    body = "One. Two. Three. Four."
    sentences = segment_sentences(body)
    assert [s.index for s in sentences] == [1, 2, 3, 4]


def test_reconstructs_body_modulo_whitespace():
    body = "First point. Second point!  Third point?   Dr. Who stays.\nFinal line."
    sentences = segment_sentences(body)
    assert _ws_free("".join(s.text for s in sentences)) == _ws_free(body)


def test_no_terminal_punctuation_is_single_sentence():
    sentences = segment_sentences("a fragment without an ending")
    assert len(sentences) == 1


def test_stoplist_loaded():
    stop = abbreviation_stoplist()
    assert "dr." in stop and "e.g." in stop
    assert len(stop) >= 30
