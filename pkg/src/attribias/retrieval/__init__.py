from .bm25 import Bm25Params, Index, build_index, retrieve, score_all, tokenize
from .kernel import BACKEND
from .ranked import RankedList, place_relevant_random
from .runfile import RunFileError, load_run_file, write_run_file

__all__ = [
    "BACKEND", "Bm25Params", "Index", "RankedList", "RunFileError", "build_index",
    "load_run_file", "place_relevant_random", "retrieve", "score_all", "tokenize",
    "write_run_file",
]
