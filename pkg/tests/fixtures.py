"""Hand-built scoring fixtures.

Each attribution case is (name, answer_text, k, relevant_set, precision,
recall); expected values were counted by hand from the set definitions
(precision = hits / distinct in-range citations, recall = hits / relevant).
"""

DRAGON_MULTI = ("The new Pete's Dragon (2016) was filmed in various locations in New Zealand, including the "
                "Bay of Plenty, Taupo, and Wellington [2][5]. The production also used the old Blue Mountain "
                "Lumber mill in Tapanui as the film's mill and transformed the main street into Millhaven for "
                "two weeks [5].")
DRAGON_SINGLE = ("The new Pete's Dragon (2016) was filmed in various locations in New Zealand, including the "
                 "Bay of Plenty, Taupo, Wellington, Rotorua, and Tapanui [5].")
DRAGON_PROSE = ("According to Document [5], the live-action scenes of the 2016 film \"Pete's Dragon\" were "
                "shot in various locations in New Zealand, including the Bay of Plenty, Taupo, Wellington, "
                "and Tapanui.")
OPEN_WRONG = "Stan Wawrinka won the men's singles title at the 2015 Australian Open [2]."
OPEN_BOTH = ("Stan Wawrinka won the men's singles title at the 2014 Australian Open, defeating the world's top "
             "two players [2]. However, the 2015 Australian Open men's singles title was won by Novak "
             "Djokovic, who defeated Andy Murray in the final [8].")

ATTRIBUTION_CASES = [
    ("dragon_multi_cite", DRAGON_MULTI, 10, {5}, 50.0, 100.0),
    ("dragon_single_cite", DRAGON_SINGLE, 10, {5}, 100.0, 100.0),
    ("dragon_inline_reference", DRAGON_PROSE, 10, {5}, 100.0, 100.0),
    ("open_wrong_doc", OPEN_WRONG, 10, {8}, 0.0, 0.0),
    ("open_wrong_and_right", OPEN_BOTH, 10, {8}, 50.0, 100.0),
    ("no_citations", "no citations here", 10, {0}, 0.0, 0.0),
    ("only_out_of_range", "see [12]", 10, {1}, 0.0, 0.0),
    ("three_one_hit", "[0][2][5]", 10, {5}, 100 / 3, 100.0),
    ("comma_group", "as shown [1, 3].", 10, {3}, 50.0, 100.0),
    ("comma_group_repeat", "[1,3] and again [3]", 10, {1, 3}, 100.0, 100.0),
    ("four_cited_two_relevant", "[0][1][2][3]", 10, {0, 9}, 25.0, 50.0),
    ("same_doc_thrice", "[4] and [4] and [4]", 10, {4}, 100.0, 100.0),
    ("hit_plus_out_of_range", "[3][12]", 10, {3}, 100.0, 100.0),
    ("padded_bracket", "[ 7 ]", 10, {7}, 100.0, 100.0),
    ("non_numeric_bracket", "[a] [] [x1]", 10, {0}, 0.0, 0.0),
    ("boundary_index", "[7][8]", 8, {7}, 100.0, 100.0),
    ("partial_recall", "[0][1]", 10, {0, 1, 2, 3}, 100.0, 50.0),
    ("one_of_three", "[2] [6] [9]", 10, {6}, 100 / 3, 100.0),
    ("parentheses_ignored", "see (5) and 5", 10, {5}, 0.0, 0.0),
    ("five_cited_two_relevant", "[1] a [2] b [3] c [4] d [5]", 10, {1, 2}, 40.0, 100.0),
]

# (answer, gold answers, expected EM)
EM_CASES = [
    (DRAGON_MULTI, ["New Zealand"], 1),
    (DRAGON_SINGLE, ["New Zealand"], 1),
    (DRAGON_PROSE, ["New Zealand"], 1),
    (OPEN_WRONG, ["Novak Djokovic", "Djokovic"], 0),
    ("Stan Wawrinka won", ["Novak Djokovic", "Djokovic"], 0),
    (OPEN_BOTH, ["Novak Djokovic", "Djokovic"], 1),
    ("", ["New Zealand"], 0),
]
