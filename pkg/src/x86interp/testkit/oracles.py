"""Slow reference oracles written from the architecture tables.

Nothing here imports the interpreter's segmentation, decoding or operand code;
inputs are plain descriptors, register files and ModR/M fields.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Descriptor:
    limit: int
    expand_down: bool = False
    default_big: bool = True
    base: int = 0


def ea_to_la_byte_oracle(desc: Descriptor, effective: int, nbytes: int) -> bool:
    """Accept iff every byte offset of the access lies inside the segment.

    Each byte is compared individually against the valid offset range
    computed straight from the E, D/B and limit fields.
    """
    if desc.expand_down:
        lowest = desc.limit
        highest = 2 ** 32 - 1 if desc.default_big else 2 ** 16 - 1
    else:
        lowest = 0
        highest = desc.limit
    for i in range(nbytes):
        offset = effective + i
        if offset < lowest or offset > highest:
            return False
    return True


# Intel SDM Vol. 2 Table 2-1, 16-bit addressing forms with the ModR/M byte.
# Keyed by (mod, rm); "d8"/"d16" are the sign-extended 8-bit / 16-bit displacement.
TABLE_2_1 = {
    (0, 0): "[BX+SI]", (0, 1): "[BX+DI]", (0, 2): "[BP+SI]", (0, 3): "[BP+DI]",
    (0, 4): "[SI]", (0, 5): "[DI]", (0, 6): "d16", (0, 7): "[BX]",
    (1, 0): "[BX+SI]+d8", (1, 1): "[BX+DI]+d8", (1, 2): "[BP+SI]+d8", (1, 3): "[BP+DI]+d8",
    (1, 4): "[SI]+d8", (1, 5): "[DI]+d8", (1, 6): "[BP]+d8", (1, 7): "[BX]+d8",
    (2, 0): "[BX+SI]+d16", (2, 1): "[BX+DI]+d16", (2, 2): "[BP+SI]+d16", (2, 3): "[BP+DI]+d16",
    (2, 4): "[SI]+d16", (2, 5): "[DI]+d16", (2, 6): "[BP]+d16", (2, 7): "[BX]+d16",
}

# Intel SDM Vol. 2 Table 2-2, 32-bit addressing forms with the ModR/M byte.
# "[--][--]" means a SIB byte follows; "d32" alone is a bare 32-bit displacement.
TABLE_2_2 = {
    (0, 0): "[EAX]", (0, 1): "[ECX]", (0, 2): "[EDX]", (0, 3): "[EBX]",
    (0, 4): "[--][--]", (0, 5): "d32", (0, 6): "[ESI]", (0, 7): "[EDI]",
    (1, 0): "[EAX]+d8", (1, 1): "[ECX]+d8", (1, 2): "[EDX]+d8", (1, 3): "[EBX]+d8",
    (1, 4): "[--][--]+d8", (1, 5): "[EBP]+d8", (1, 6): "[ESI]+d8", (1, 7): "[EDI]+d8",
    (2, 0): "[EAX]+d32", (2, 1): "[ECX]+d32", (2, 2): "[EDX]+d32", (2, 3): "[EBX]+d32",
    (2, 4): "[--][--]+d32", (2, 5): "[EBP]+d32", (2, 6): "[ESI]+d32", (2, 7): "[EDI]+d32",
}

# Intel SDM Vol. 2 Table 2-3, 32-bit addressing forms with the SIB byte.
# Scaled-index rows keyed by (ss, index); base columns keyed by base.
SIB_SCALED_INDEX = {
    (0, 0): "[EAX]", (0, 1): "[ECX]", (0, 2): "[EDX]", (0, 3): "[EBX]",
    (0, 4): "none", (0, 5): "[EBP]", (0, 6): "[ESI]", (0, 7): "[EDI]",
    (1, 0): "[EAX*2]", (1, 1): "[ECX*2]", (1, 2): "[EDX*2]", (1, 3): "[EBX*2]",
    (1, 4): "none", (1, 5): "[EBP*2]", (1, 6): "[ESI*2]", (1, 7): "[EDI*2]",
    (2, 0): "[EAX*4]", (2, 1): "[ECX*4]", (2, 2): "[EDX*4]", (2, 3): "[EBX*4]",
    (2, 4): "none", (2, 5): "[EBP*4]", (2, 6): "[ESI*4]", (2, 7): "[EDI*4]",
    (3, 0): "[EAX*8]", (3, 1): "[ECX*8]", (3, 2): "[EDX*8]", (3, 3): "[EBX*8]",
    (3, 4): "none", (3, 5): "[EBP*8]", (3, 6): "[ESI*8]", (3, 7): "[EDI*8]",
}
SIB_BASE = ("EAX", "ECX", "EDX", "EBX", "ESP", "[*]", "ESI", "EDI")

REG16 = {"AX": 0, "CX": 1, "DX": 2, "BX": 3, "SP": 4, "BP": 5, "SI": 6, "DI": 7}
REG32 = {"EAX": 0, "ECX": 1, "EDX": 2, "EBX": 3, "ESP": 4, "EBP": 5, "ESI": 6, "EDI": 7}


def _signed(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >= 1 << (bits - 1) else value


def _eval_terms(expr: str, regs: dict[str, int], disp: int) -> tuple[int, list[str]]:
    """Sum the bracketed registers and displacement tokens of a table entry."""
    total = 0
    used = []
    for token in expr.replace("]", "").replace("[", "+").split("+"):
        if not token:
            continue
        if token == "d8":
            total += _signed(disp, 8)
        elif token == "d16":
            total += _signed(disp, 16)
        elif token == "d32":
            total += _signed(disp, 32)
        elif "*" in token:
            name, factor = token.split("*")
            total += regs[name] * int(factor)
            used.append(name)
        else:
            total += regs[token]
            used.append(token)
    return total, used


def oracle_ea16(mod: int, rm: int, gpr: list[int], disp: int) -> tuple[int, str]:
    """Effective address and default segment name per Table 2-1."""
    regs = {name: gpr[i] & 0xFFFF for name, i in REG16.items()}
    total, used = _eval_terms(TABLE_2_1[(mod, rm)], regs, disp)
    return total % 2 ** 16, "SS" if "BP" in used else "DS"


def oracle_ea32(mod: int, rm: int, gpr: list[int], disp: int,
                sib: tuple[int, int, int] | None = None) -> tuple[int, str]:
    """Effective address and default segment name per Tables 2-2 and 2-3 (no REX)."""
    regs = {name: gpr[i] & 0xFFFFFFFF for name, i in REG32.items()}
    entry = TABLE_2_2[(mod, rm)]
    if not entry.startswith("[--][--]"):
        total, used = _eval_terms(entry, regs, disp)
        return total % 2 ** 32, "SS" if ("EBP" in used or "ESP" in used) else "DS"
    ss, index, base = sib
    total = 0
    segment = "DS"
    scaled = SIB_SCALED_INDEX[(ss, index)]
    if scaled != "none":
        total += _eval_terms(scaled, regs, 0)[0]
    base_name = SIB_BASE[base]
    if base_name == "[*]":
        # no base with mod 00 (disp32 instead), otherwise [EBP]
        if mod == 0:
            total += _signed(disp, 32)
        else:
            total += regs["EBP"]
            segment = "SS"
    else:
        total += regs[base_name]
        if base_name in ("ESP", "EBP"):
            segment = "SS"
    if mod == 1:
        total += _signed(disp, 8)
    elif mod == 2:
        total += _signed(disp, 32)
    return total % 2 ** 32, segment


# Operand-size and address-size attributes, Intel SDM Vol. 1 Tables 3-3 and 3-4.
# Rows: (mode, cs_d, prefix_66, prefix_67, rex_w) -> (operand bytes, address bytes).
SIZE_TABLE = {
    # 32-bit protected / compatibility mode, CS.D = 0 (16-bit segment)
    ("m32", 0, 0, 0, 0): (2, 2),
    ("m32", 0, 0, 1, 0): (2, 4),
    ("m32", 0, 1, 0, 0): (4, 2),
    ("m32", 0, 1, 1, 0): (4, 4),
    # CS.D = 1 (32-bit segment)
    ("m32", 1, 0, 0, 0): (4, 4),
    ("m32", 1, 0, 1, 0): (4, 2),
    ("m32", 1, 1, 0, 0): (2, 4),
    ("m32", 1, 1, 1, 0): (2, 2),
    # 64-bit mode: CS.D is ignored
    ("m64", 0, 0, 0, 0): (4, 8),
    ("m64", 0, 0, 1, 0): (4, 4),
    ("m64", 0, 1, 0, 0): (2, 8),
    ("m64", 0, 1, 1, 0): (2, 4),
    ("m64", 0, 0, 0, 1): (8, 8),
    ("m64", 0, 0, 1, 1): (8, 4),
    ("m64", 0, 1, 0, 1): (8, 8),
    ("m64", 0, 1, 1, 1): (8, 4),
    ("m64", 1, 0, 0, 0): (4, 8),
    ("m64", 1, 0, 1, 0): (4, 4),
    ("m64", 1, 1, 0, 0): (2, 8),
    ("m64", 1, 1, 1, 0): (2, 4),
    ("m64", 1, 0, 0, 1): (8, 8),
    ("m64", 1, 0, 1, 1): (8, 4),
    ("m64", 1, 1, 0, 1): (8, 8),
    ("m64", 1, 1, 1, 1): (8, 4),
}
