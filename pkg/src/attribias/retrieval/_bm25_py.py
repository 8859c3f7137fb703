"""Pure-Python BM25 accumulation kernel, used when the extension is absent."""


def accumulate(term_ids, idf, offsets, post_docs, post_tf, norm, k1, scores):
    # Must match _bm25_core.accumulate operation for operation.
    k1p = k1 + 1.0
    for t in term_ids:
        t = int(t)
        w = float(idf[t])
        for j in range(int(offsets[t]), int(offsets[t + 1])):
            d = int(post_docs[j])
            tf = float(post_tf[j])
            scores[d] += w * (tf * k1p) / (tf + float(norm[d]))
