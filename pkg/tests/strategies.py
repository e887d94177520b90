from hypothesis import strategies as st

from dnsinject.wire import RawName

labels = st.binary(min_size=1, max_size=63)


@st.composite
def raw_names(draw, max_labels=8):
    out = []
    total = 1
    for label in draw(st.lists(labels, max_size=max_labels)):
        if total + len(label) + 1 > 255:
            break
        out.append(label)
        total += len(label) + 1
    return RawName(tuple(out))


ldh_labels = st.from_regex(r"\A[a-z0-9]([a-z0-9-]{0,20}[a-z0-9])?\Z")
