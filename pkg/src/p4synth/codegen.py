"""Rendering evolved programs as P4-style source.

Two artifacts come out of emission: the bare ingress body (one statement
per primitive, four spaces of indentation per nesting level) and a full
single-ingress source file in the v1model shape, with one header field
per packet attribute.  Attribute types map to bit<32> for IP addresses,
bit<16> for integers, bit<1> for booleans, and bit<64> for strings.

The body grammar is small enough to parse back; parse_body() is the
round-trip check used to keep emission honest without an external
toolchain.
"""

from __future__ import annotations

import re

from dataclasses import dataclass

from .genome import (
    ASSIGN,
    ENDIF,
    IF_EQ,
    IF_NEQ,
    GenotypeError,
    Primitive,
    Program,
    UnbalancedProgram,
    _parse_literal_text,
    is_balanced,
)
from .registers import RegisterFile, RegKind
from .rules import LitType


class BodyParseError(Exception):
    """A body line does not match the emitted statement shapes."""


@dataclass(frozen=True)
class EmittedProgram:
    body: str
    full_source: str


_FIELD_TYPES = {
    LitType.IP: "bit<32>",
    LitType.INT: "bit<16>",
    LitType.BOOL: "bit<1>",
    LitType.STRING: "bit<64>",
}

_INDENT = "    "


def _operand(rf: RegisterFile, index: int) -> str:
    reg = rf.registers[index]
    if reg.kind is RegKind.ATTRIBUTE:
        return reg.name
    return reg.value.source_form()


def emit_body(p: Program, rf: RegisterFile) -> str:
    """The primitive sequence as nested if/assignment statements."""
    lines: list[str] = []
    depth = 0
    for prim in p.code:
        kind = prim.kind
        if kind is ENDIF:
            if depth == 0:
                raise UnbalancedProgram("ENDIF without an open IF")
            depth -= 1
            lines.append(f"{_INDENT * depth}}}")
        elif kind is ASSIGN:
            dst, src = prim.args
            lines.append(
                f"{_INDENT * depth}{_operand(rf, dst)} = {_operand(rf, src)};"
            )
        else:
            cmp = "==" if kind is IF_EQ else "!="
            a, b = prim.args
            lines.append(
                f"{_INDENT * depth}if ({_operand(rf, a)} {cmp} "
                f"{_operand(rf, b)}) {{"
            )
            depth += 1
    if depth != 0:
        raise UnbalancedProgram("IF without a closing ENDIF")
    return "\n".join(lines) + ("\n" if lines else "")


def _header_fields(rf: RegisterFile) -> list[str]:
    return [
        f"{_INDENT}{_FIELD_TYPES[reg.type_tag]} {reg.name};"
        for reg in rf.attribute_registers
    ]


def _copy_in(rf: RegisterFile) -> list[str]:
    out = []
    for reg in rf.attribute_registers:
        decl = _FIELD_TYPES[reg.type_tag]
        out.append(f"{decl} {reg.name} = hdr.attrs.{reg.name};")
    return out


def _copy_out(rf: RegisterFile) -> list[str]:
    return [
        f"hdr.attrs.{reg.name} = {reg.name};"
        for reg in rf.attribute_registers
    ]


def emit(p: Program, rf: RegisterFile) -> EmittedProgram:
    """Body plus a self-contained v1model-style source file around it."""
    body = emit_body(p, rf)
    base = _INDENT * 2
    body_block = "".join(
        f"{base}{line}\n" for line in body.splitlines()
    )
    copy_in = "".join(f"{base}{line}\n" for line in _copy_in(rf))
    copy_out = "".join(f"{base}{line}\n" for line in _copy_out(rf))
    fields = "\n".join(_header_fields(rf))
    full = f"""#include <core.p4>
#include <v1model.p4>

header attrs_t {{
{fields}
}}

struct headers_t {{
    attrs_t attrs;
}}

struct metadata_t {{
}}

parser AttrParser(packet_in pkt, out headers_t hdr, inout metadata_t meta,
                  inout standard_metadata_t std_meta) {{
    state start {{
        pkt.extract(hdr.attrs);
        transition accept;
    }}
}}

control NoVerifyChecksum(inout headers_t hdr, inout metadata_t meta) {{
    apply {{ }}
}}

control Ingress(inout headers_t hdr, inout metadata_t meta,
                inout standard_metadata_t std_meta) {{
    apply {{
{copy_in}
{body_block}
{copy_out}    }}
}}

control Egress(inout headers_t hdr, inout metadata_t meta,
               inout standard_metadata_t std_meta) {{
    apply {{ }}
}}

control NoComputeChecksum(inout headers_t hdr, inout metadata_t meta) {{
    apply {{ }}
}}

control AttrDeparser(packet_out pkt, in headers_t hdr) {{
    apply {{
        pkt.emit(hdr.attrs);
    }}
}}

V1Switch(AttrParser(), NoVerifyChecksum(), Ingress(), Egress(),
         NoComputeChecksum(), AttrDeparser()) main;
"""
    return EmittedProgram(body=body, full_source=full)


# === Round-trip parsing =============================================

_IF_RE = re.compile(r"^if \((.+?) (==|!=) (.+?)\) \{$")
_ASSIGN_RE = re.compile(r"^(\S+) = (.+?);$")


def _resolve_body_operand(rf: RegisterFile, text: str, line_no: int) -> int:
    index = rf.attr_index.get(text)
    if index is not None:
        return index
    try:
        lit = _parse_literal_text(text)
    except GenotypeError as exc:
        raise BodyParseError(f"line {line_no}: {exc}") from None
    index = rf.const_index.get(lit)
    if index is None:
        raise BodyParseError(
            f"line {line_no}: {text!r} is neither an attribute nor a known "
            "constant"
        )
    return index


def parse_body(text: str, rf: RegisterFile) -> Program:
    """Parse an emitted body back into the program that produced it."""
    code: list[Primitive] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "}":
            code.append(Primitive(ENDIF))
            continue
        m = _IF_RE.match(line)
        if m:
            a = _resolve_body_operand(rf, m.group(1), line_no)
            b = _resolve_body_operand(rf, m.group(3), line_no)
            kind = IF_EQ if m.group(2) == "==" else IF_NEQ
            code.append(Primitive(kind, (a, b)))
            continue
        m = _ASSIGN_RE.match(line)
        if m:
            dst = _resolve_body_operand(rf, m.group(1), line_no)
            src = _resolve_body_operand(rf, m.group(2), line_no)
            code.append(Primitive(ASSIGN, (dst, src)))
            continue
        raise BodyParseError(f"line {line_no}: unrecognized statement {line!r}")
    if not is_balanced(code):
        raise UnbalancedProgram("body IF/ENDIF nesting is broken")
    return Program(code)
