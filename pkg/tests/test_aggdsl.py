import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snow.aggdsl import (
    Binary, Boolean, Call, DslSemanticError, DslSyntaxError, Number, Ref, Unary, evaluate, parse, to_text,
)
from snow.aggdsl.codegen import dry_run_patients, generate_program
from snow.agents.specs import REFERENCE_PROGRAMS, FeatureSpec, reference_specs
from snow.llm import LLMClient
from snow.regions import REGIONS
from snow.synth import mock_rules

SOURCES = {
    "cancer_presence": list(REGIONS),
    "gleason_score_sum": list(REGIONS),
    "tumor_percentage": list(REGIONS),
    "total_cores_count": None,
    "positive_cores_count": None,
}


def run(text, values, sources=SOURCES):
    return evaluate(parse(text, "f", sources), values)


def test_reference_programs_typecheck():
    prog = parse("100 * count_nonzero(cancer_presence.*) / total_cores_count", "pct", SOURCES)
    assert isinstance(prog.ast, Binary) and prog.result_type == "num"
    prog = parse("max(gleason_score_sum.*)", "m", SOURCES)
    assert prog.ast == Call("max", (Ref("gleason_score_sum", "*"),))


def test_syntax_error_position():
    with pytest.raises(DslSyntaxError) as ei:
        parse("max(")
    assert ei.value.position == 4 and ei.value.line == 1 and ei.value.column == 5


def test_syntax_error_line_and_column():
    with pytest.raises(DslSyntaxError) as ei:
        parse("max(a.*)\n  + )")
    assert ei.value.line == 2 and ei.value.column == 5


def test_undeclared_source():
    with pytest.raises(DslSemanticError):
        parse("max(prostate_volume.*)", "f", SOURCES)


def test_wildcard_needed_for_subgroup_feature():
    with pytest.raises(DslSemanticError):
        parse("cancer_presence + 1", "f", SOURCES)


def test_bilateral():
    prog = "any(cancer_presence.left_*) and any(cancer_presence.right_*)"
    both = {"cancer_presence": {r: 0.0 for r in REGIONS} | {"left_apex_medial": 1.0, "right_base_lateral": 1.0}}
    one = {"cancer_presence": {r: 0.0 for r in REGIONS} | {"left_apex_medial": 1.0}}
    assert run(prog, both) == (1.0, [])
    assert run(prog, one) == (0.0, [])


def test_percentage_positive():
    values = {"positive_cores_count": 6.0, "total_cores_count": 12.0}
    assert run("100 * positive_cores_count / total_cores_count", values)[0] == 50.0


def test_all_missing_is_missing():
    values = {"gleason_score_sum": {r: None for r in REGIONS}}
    assert run("max(gleason_score_sum.*)", values) == (None, [])
    assert run("max(gleason_score_sum.*)", {}) == (None, [])


def test_reductions_skip_missing():
    values = {"tumor_percentage": {"left_apex_medial": 10.0, "left_mid_medial": None, "right_apex_medial": 30.0}}
    assert run("mean(tumor_percentage.*)", values)[0] == 20.0
    assert run("count(tumor_percentage.*)", values)[0] == 2.0
    assert run("min(tumor_percentage.*)", values)[0] == 10.0
    assert run("sum(tumor_percentage.*)", values)[0] == 40.0


def test_division_by_zero_warns():
    value, warns = run("positive_cores_count / total_cores_count", {"positive_cores_count": 1.0, "total_cores_count": 0.0})
    assert value is None and warns


def test_source_too_long():
    with pytest.raises(DslSyntaxError):
        parse("1 + " * 1000 + "1")


# -- print / parse round trip ---------------------------------------------------

_names = st.sampled_from(["a", "b_c", "gleason_score_sum"])
_leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(Number),
    st.booleans().map(Boolean),
    _names.map(Ref),
    st.tuples(_names, st.sampled_from(["*", "left_*", "left_apex_medial"])).map(lambda t: Ref(*t)),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*", "/", "<", ">=", "==", "and", "or"]), children, children)
        .map(lambda t: Binary(*t)),
        st.tuples(st.sampled_from(["-", "not"]), children).map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(["max", "mean", "any"]), st.lists(children, min_size=1, max_size=3))
        .map(lambda t: Call(t[0], tuple(t[1]))),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _extend, max_leaves=12))
def test_print_parse_roundtrip(node):
    text = to_text(node)
    if len(text.encode()) > 2048:
        return
    assert parse(text).ast == node


def _random_values(rng):
    out = {}
    for name, subs in SOURCES.items():
        if subs is None:
            out[name] = None if rng.random() < 0.2 else float(rng.integers(0, 15))
        else:
            out[name] = {s: (None if rng.random() < 0.3 else float(rng.integers(0, 6))) for s in subs}
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_max_matches_numpy(seed):
    rng = np.random.default_rng(seed)
    v = _random_values(rng)
    present = [x for x in v["gleason_score_sum"].values() if x is not None]
    got, _ = run("max(gleason_score_sum.*)", v)
    assert got == (max(present) if present else None)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evaluation_is_total(seed):
    # every reference program returns a finite number or missing on any input
    rng = np.random.default_rng(seed)
    v = _random_values(rng)
    for prog in REFERENCE_PROGRAMS.values():
        sources = {k: SOURCES.get(k, list(REGIONS)) for k in parse(prog).sources}
        value, _ = evaluate(parse(prog, "f", sources), v)
        assert value is None or np.isfinite(value)


# -- code generation ------------------------------------------------------------

def _agg_spec(name):
    return next(s for s in reference_specs() if s.name == name)


def test_codegen_reference(cohort):
    client = LLMClient(mock_rules(cohort.manifest))
    res = generate_program(client, _agg_spec("max_tumor_percentage"), {"tumor_percentage": list(REGIONS)})
    assert res.accepted and res.program.text() == "max(tumor_percentage.*)"
    assert len(res.attempts) == 1


def test_codegen_repairs_once(cohort):
    client = LLMClient(mock_rules(cohort.manifest, bad_programs={"max_tumor_percentage": ["max("]}))
    res = generate_program(client, _agg_spec("max_tumor_percentage"), {"tumor_percentage": list(REGIONS)})
    assert res.accepted and len(res.attempts) == 2
    assert "syntax error" in res.attempts[0]["error"]


def test_codegen_gives_up_after_two(cohort):
    client = LLMClient(mock_rules(cohort.manifest, bad_programs={"max_tumor_percentage": ["max(", "max(x.*)"]}))
    res = generate_program(client, _agg_spec("max_tumor_percentage"), {"tumor_percentage": list(REGIONS)})
    assert not res.accepted and res.removal_reason.startswith("codegen_failure")


def test_spec_without_sources():
    with pytest.raises(ValueError):
        FeatureSpec("x", aggregated=True)


def test_dry_run_shapes():
    pts = dry_run_patients({"a": None, "b": ["l", "r"]})
    assert len(pts) == 3 and pts[2]["a"] is None and pts[2]["b"] == {"l": None, "r": None}
