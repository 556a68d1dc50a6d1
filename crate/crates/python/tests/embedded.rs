use pyo3::prelude::*;

#[test]
fn module_works_from_an_embedded_interpreter() {
    use hdqnn_py::hdqnn_py;
    pyo3::append_to_inittab!(hdqnn_py);
    Python::initialize();
    Python::attach(|py| {
        let code = c"
import math
import hdqnn_py as h
sv = h.StateVector(2)
sv.apply_rotation(1, math.pi / 2, 0.3)
assert abs(sv.exact_marginals()[1] - 0.5) < 1e-12
cfg = h.PqcConfig(2, 1, 10)
assert cfg.control_dim == 6 and cfg.angle_dim == 4
jac = h.shift_jacobian(cfg, [0.4, 0.0, 0.1, 0.0, 0.0, 0.0])
assert len(jac) == 2 and len(jac[0]) == 4
assert abs(h.shift_cost(220, 10, 1000, 256, 5e-7)['total_seconds_per_update'] - 281.6) < 1e-9
assert h.surrogate_param_count(5, 10, 2048) == 258053
try:
    h.exact_layer_map(cfg, [0.0])
    raise AssertionError('short control vector accepted')
except ValueError:
    pass
";
        if let Err(e) = py.run(code, None, None) {
            e.display(py);
            panic!("embedded script failed");
        }
    });
}
