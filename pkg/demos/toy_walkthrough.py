"""Walk through the three-window toy code: plan, encode, decode, audit.

Run with ``python3 demos/toy_walkthrough.py``.
"""

import numpy as np

import privcode as pc
from privcode import bits

SETS = [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 0]]


def main():
    params = pc.derive_parameters(3, 0.25, 0.25, {"b": 4, "b_prime": 1, "length": 10})
    spec = pc.sample_decoder(params, pc.build_syndrome_map(4, b_prime=1), SETS)
    codec = pc.PrivateCodec(spec)
    print(f"rate {codec.rate:.3f} codeword bits per source bit")

    for v in range(8):
        x = bits.int_to_bits(v, 3)
        plan = codec.plan(x)
        status = plan.fallback or "matched"
        errs = np.round(plan.bit_errors(), 4).tolist()
        print(f"x={bits.bits_to_str(x)}  {status:22s} per-bit error {errs}")

    x = "010"
    codes = codec.encode(x, seed=0, count=8)
    print("eight encodings of 010:", [format(int(c), "010b") for c in codes])
    print("decoded:", [bits.bits_to_str(r) for r in codec.decode(codes)])

    for scope in ("weight-bounded", "all"):
        audit = pc.audit_privacy(spec, scope=scope)
        print(f"audit scope={scope:15s} leakage {audit.leakage:.4f}")


if __name__ == "__main__":
    main()
