#!/usr/bin/env python3
"""Convert primitive-gate Verilog (and/nand/or/nor/not/buf/xor/xnor instances)
into BENCH. Gates wider than four inputs are split into a tree of <=4-input
gates computing the same function."""
import re
import sys

CORE = {"and": "AND", "nand": "AND", "or": "OR", "nor": "OR"}


def convert(path, name):
    text = open(path).read()
    ins = [x.strip() for x in re.search(r"\binput\s+([^;]*);", text, re.S).group(1).split(",")]
    outs = [x.strip() for x in re.search(r"\boutput\s+([^;]*);", text, re.S).group(1).split(",")]
    lines = [f"# {name}", f"# {len(ins)} inputs", f"# {len(outs)} outputs"]
    lines += [f"INPUT({i})" for i in ins]
    lines += [f"OUTPUT({o})" for o in outs]
    fresh = 0
    for kind, _inst, args in re.findall(
        r"^\s*(and|nand|or|nor|not|buf|xor|xnor)\s+(\S+)\s*\(([^;]*)\);", text, re.M
    ):
        args = [a.strip() for a in args.replace("\n", " ").split(",")]
        out, fan = args[0], args[1:]
        if kind in ("xor", "xnor") and len(fan) > 2:
            raise SystemExit(f"wide {kind} not supported")
        if len(fan) > 4:
            chunks = [fan[i : i + 4] for i in range(0, len(fan), 4)]
            if len(chunks) > 4:
                raise SystemExit("gate too wide")
            parts = []
            for c in chunks:
                if len(c) == 1:
                    parts.append(c[0])
                    continue
                fresh += 1
                t = f"{out}_w{fresh}"
                lines.append(f"{t} = {CORE[kind]}({', '.join(c)})")
                parts.append(t)
            fan = parts
        op = {"not": "NOT", "buf": "BUFF"}.get(kind, kind.upper())
        lines.append(f"{out} = {op}({', '.join(fan)})")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    src, name, dst = sys.argv[1:4]
    open(dst, "w").write(convert(src, name))
