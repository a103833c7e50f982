"""Record identifiers: ``<prefix>-XXXX[-XXXX...]`` in Crockford base-32."""

import re

ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
RID_PATTERN = re.compile(r"^[0-9A-Z]+(-[0-9A-Z]{4})+$")
_PREFIX_PATTERN = re.compile(r"^[0-9A-HJKMNP-TV-Z]+$")


def encode_base32(n, width=0):
    if n < 0:
        raise ValueError("negative value")
    digits = []
    while n:
        n, r = divmod(n, 32)
        digits.append(ALPHABET[r])
    s = "".join(reversed(digits)) or "0"
    return s.rjust(width, "0")


def make_rid(prefix, counter):
    """Format ``counter`` as a RID under ``prefix``, grouping digits by four."""
    body = encode_base32(counter)
    body = body.rjust(-(-len(body) // 4) * 4, "0")
    groups = [body[i:i + 4] for i in range(0, len(body), 4)]
    return "-".join([prefix] + groups)


def valid_prefix(prefix):
    return bool(_PREFIX_PATTERN.match(prefix))


def is_rid(value):
    if not isinstance(value, str) or not RID_PATTERN.match(value):
        return False
    return all(c in ALPHABET for c in value.replace("-", ""))


def rid_sort_key(rid):
    """Sort key giving allocation order for RIDs sharing a prefix."""
    prefix, _, body = rid.partition("-")
    digits = body.replace("-", "")
    return (prefix, len(digits), digits)
