#!/usr/bin/env python3
"""Recomputes the golden values frozen into the C++ tests.

Uses hashlib and the `cryptography` package only, so the values are
independent of the libsodium code paths they check.
"""
import base64
import hashlib
import json

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey


def sha(b):
    return hashlib.sha256(b).digest()


def canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


def keypair(seed):
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    return sk, pk


def address(pk):
    return "0x" + sha(pk)[-20:].hex()


def leaf(data):
    return {"data": base64.b64encode(data).decode(), "links": []}


def main():
    sk, pk = keypair(bytes(range(32)))
    _, pk2 = keypair(bytes([0x42] * 32))
    print("public key (seed 00..1f):", pk.hex())
    print("address   (seed 00..1f):", address(pk))
    print("address   (seed 42*32): ", address(pk2))

    h1, h2, h3 = sha(b"a"), sha(b"b"), sha(b"c")
    print("merkle [a,b]:  ", sha(h1 + h2).hex())
    print("merkle [b,a]:  ", sha(h2 + h1).hex())
    print("merkle [a,b,c]:", sha(sha(h1 + h2) + sha(h3 + h3)).hex())
    print("merkle []:     ", sha(b"").hex())

    print("leaf 'abc':", sha(canonical(leaf(b"abc"))).hex())
    print("leaf '':   ", sha(canonical(leaf(b""))).hex())

    unsigned = {
        "from": address(pk),
        "gas_limit": "100000",
        "gas_price": "0",
        "nonce": "0",
        "public_key": "0x" + pk.hex(),
        "to": address(pk2),
        "value": "22900000000000000000",
    }
    sig = sk.sign(canonical(unsigned))
    print("tx signature:", sig.hex())
    print("tx hash:     ", sha(canonical(dict(unsigned, signature="0x" + sig.hex()))).hex())

    content = bytes(i % 251 for i in range(1000000))
    chunks = [content[i : i + 262144] for i in range(0, len(content), 262144)]
    links = [
        {"hash": sha(canonical(leaf(c))).hex(), "name": "", "size": str(len(c))} for c in chunks
    ]
    print("root of 1,000,000 bytes (i % 251):", sha(canonical({"data": "", "links": links})).hex())


if __name__ == "__main__":
    main()
