"""Registrable-domain extraction (public suffix + one label).

A full public-suffix list is not vendored; the embedded set covers the
multi-label suffixes that actually occur in scan data, and everything else
falls back to treating the last label as the suffix. Good enough to decide
whether two redirect targets belong to the same operator.
"""

from __future__ import annotations

import ipaddress

# Common multi-label public suffixes. Single-label suffixes (de, com, ...)
# need no entry: the fallback handles them.
_MULTI_LABEL_SUFFIXES = {
    "co.uk", "org.uk", "ac.uk", "gov.uk", "me.uk", "net.uk",
    "com.au", "net.au", "org.au", "id.au",
    "com.br", "net.br", "org.br",
    "co.jp", "ne.jp", "or.jp", "ac.jp",
    "com.cn", "net.cn", "org.cn",
    "co.nz", "net.nz", "org.nz",
    "co.za", "org.za",
    "com.mx", "com.ar", "com.tr", "com.pl", "com.ru",
    "co.at", "or.at", "ac.at",
    "co.in", "net.in", "org.in",
    "com.sg", "com.hk", "com.tw",
    "co.kr", "or.kr",
    "com.ua", "in.ua",
    "co.il", "org.il",
    "com.de",  # private registry commonly seen on .de redirects
}


def registrable_domain(host: str) -> str:
    """Lowest registrable unit of ``host``; IPs and single labels pass
    through unchanged."""
    host = host.strip().strip(".").lower()
    if not host:
        return ""
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    try:
        ipaddress.ip_address(host)
        return host
    except ValueError:
        pass
    labels = host.split(".")
    if len(labels) < 2:
        return host
    for take in (3, 2):
        if len(labels) > take and ".".join(labels[-take:]) in _MULTI_LABEL_SUFFIXES:
            return ".".join(labels[-(take + 1):])
    return ".".join(labels[-2:])
