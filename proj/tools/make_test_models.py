"""Writes the small ONNX fixtures used by the unit tests into tests/data.

The graphs are fixed-shape on purpose: OpenCV's ONNX importer cannot run
graphs with symbolic spatial dimensions.

    python3 tools/make_test_models.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper


def save(graph, path):
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    onnx.save(model, str(path))


def frame_inputs(h, w):
    return [
        helper.make_tensor_value_info("frame_prev", TensorProto.FLOAT, [1, h, w, 3]),
        helper.make_tensor_value_info("frame_next", TensorProto.FLOAT, [1, h, w, 3]),
    ]


def flow_diff(h, w):
    # flow = (next - prev)[..., 0:2]; cheap and exactly predictable.
    inits = [
        numpy_helper.from_array(np.array([0], dtype=np.int64), "starts"),
        numpy_helper.from_array(np.array([2], dtype=np.int64), "ends"),
        numpy_helper.from_array(np.array([3], dtype=np.int64), "axes"),
    ]
    nodes = [
        helper.make_node("Sub", ["frame_next", "frame_prev"], ["d"]),
        helper.make_node("Slice", ["d", "starts", "ends", "axes"], ["flow"]),
    ]
    out = [helper.make_tensor_value_info("flow", TensorProto.FLOAT, [1, h, w, 2])]
    return helper.make_graph(nodes, "flow_diff", frame_inputs(h, w), out, inits)


def flow_three_channels(h, w):
    nodes = [helper.make_node("Sub", ["frame_next", "frame_prev"], ["flow"])]
    out = [helper.make_tensor_value_info("flow", TensorProto.FLOAT, [1, h, w, 3])]
    return helper.make_graph(nodes, "flow_bad", frame_inputs(h, w), out)


def classifier_mean(side):
    # delta = 1 - mean(patch), the same rule as the built-in stub.
    inits = [
        numpy_helper.from_array(np.full((1, 3, 1, 1), -1.0 / 3, dtype=np.float32), "w"),
        numpy_helper.from_array(np.array([1.0], dtype=np.float32), "b"),
        numpy_helper.from_array(np.array([1], dtype=np.int64), "shape"),
    ]
    nodes = [
        helper.make_node("Transpose", ["patch"], ["t"], perm=[0, 3, 1, 2]),
        helper.make_node("GlobalAveragePool", ["t"], ["g"]),
        helper.make_node("Conv", ["g", "w", "b"], ["c"], kernel_shape=[1, 1]),
        helper.make_node("Reshape", ["c", "shape"], ["delta"]),
    ]
    inp = [helper.make_tensor_value_info("patch", TensorProto.FLOAT, [1, side, side, 3])]
    out = [helper.make_tensor_value_info("delta", TensorProto.FLOAT, [1])]
    return helper.make_graph(nodes, "classifier_mean", inp, out, inits)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "tests" / "data"
    out.mkdir(parents=True, exist_ok=True)
    save(flow_diff(24, 32), out / "flow_diff_32x24.onnx")
    save(flow_three_channels(24, 32), out / "flow_bad_32x24.onnx")
    save(classifier_mean(224), out / "classifier_mean_224.onnx")
    save(classifier_mean(32), out / "classifier_mean_32.onnx")


if __name__ == "__main__":
    main()
