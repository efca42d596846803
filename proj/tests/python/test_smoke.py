import json
import pathlib

import jsonschema
import pytest

import mlrtl

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = json.loads((ROOT / "schema" / "interchange.schema.json").read_text())


def validate(doc):
    jsonschema.Draft202012Validator(SCHEMA).validate(json.loads(doc) if isinstance(doc, str) else doc)


def test_version():
    assert mlrtl.__version__ == "0.1.0"
    assert mlrtl.SCHEMA_VERSION == "1.0"


def test_fixed_point_examples():
    assert mlrtl.normalize_format("fixed<8,1>") == "fixed<8,1,s,rne,sat>"
    assert mlrtl.quantize_real(0.3, "fixed<8,1>") == 38
    assert mlrtl.quantize_real(5.0, "fixed<8,1>") == 127
    assert mlrtl.dequantize(96, "fixed<8,1>") == 0.75
    assert mlrtl.fxp_add(127, "fixed<8,1>", 127, "fixed<8,1>", "fixed<8,1>") == 127
    assert mlrtl.fxp_mul(64, "fixed<8,1>", 64, "fixed<8,1>", "fixed<8,1>") == 32
    big = (1 << 63) - 1
    assert mlrtl.fxp_add(big, "fixed<64,64>", 1, "fixed<64,64>", "fixed<64,64>") == big
    assert mlrtl.fxp_add(big, "fixed<64,64>", 1, "fixed<64,64>", "fixed<64,64,s,rne,wrap>") == -big - 1


def test_errors_carry_codes():
    with pytest.raises(mlrtl.MlrtlError) as e:
        mlrtl.ingest("{")
    assert mlrtl.error_code(e.value) == "MalformedJson"
    with pytest.raises(mlrtl.MlrtlError) as e:
        mlrtl.normalize_format("fixed<0,0>")
    assert mlrtl.error_code(e.value) == "InvalidFormat"


def test_demo_documents_match_the_schema():
    for doc in (mlrtl.demo_fcnn(1, 4, 2), mlrtl.demo_bdt(1, 4, 2), mlrtl.demo_bdt(2, 4, 3)):
        validate(doc)
        assert mlrtl.normalize_model(doc) == mlrtl.normalize_model(mlrtl.normalize_model(doc))


def exporter_style_mlp():
    return {
        "schema_version": "1.0",
        "model_kind": "fcnn",
        "metadata": {"source_framework": "numpy", "created": "2026-01-01"},
        "payload": {
            "layers": [
                {"weights": [[0.5, -0.25], [1.0, 0.75]], "bias": [0.1, -0.1], "activation": "relu"},
                {"weights": [[1.0, -1.0]], "bias": [0.0], "activation": "sigmoid"},
            ]
        },
    }


def test_exporter_documents_ingest():
    doc = exporter_style_mlp()
    validate(doc)
    stats = mlrtl.ingest(json.dumps(doc))
    assert stats["model_kind"] == "fcnn"
    assert stats["n_params"] == 9
    bad = exporter_style_mlp()
    bad["payload"]["layers"][1]["weights"] = [[1.0, -1.0, 2.0]]
    with pytest.raises(mlrtl.MlrtlError) as e:
        mlrtl.ingest(json.dumps(bad))
    assert mlrtl.error_code(e.value) == "StructuralViolation"
    with pytest.raises(jsonschema.ValidationError):
        validate({"schema_version": "1.0", "model_kind": "svm", "payload": {}})


def test_quantize_predict_compile():
    rows, labels = mlrtl.make_synthetic(3, 300, 4, 2)
    doc = mlrtl.demo_fcnn(3, 4, 2)
    qdoc = mlrtl.calibrate_and_quantize(doc, rows, 16)
    float_preds, _ = mlrtl.predict_float(doc, rows)
    fixed_preds, raws = mlrtl.predict_fixed(qdoc, rows)
    assert len(raws) == 300 and all(isinstance(v, int) for v in raws[0])
    assert mlrtl.metric_accuracy(fixed_preds, labels) > 0.8
    assert sum(a == b for a, b in zip(float_preds, fixed_preds)) >= 290
    out = mlrtl.compile(qdoc, reuse=2, name="core")
    assert out["ii"] == 2
    assert "module core" in out["verilog"]
    assert mlrtl.lint_verilog(out["verilog"]) == []
    assert json.loads(out["netlist"])["schema_version"] == "1.0"
    assert json.loads(out["report"])["dsp"] > 0


def test_auc():
    assert mlrtl.metric_auc([0.1, 0.5, 0.5, 0.9], [0, 0, 1, 1]) == 0.875
