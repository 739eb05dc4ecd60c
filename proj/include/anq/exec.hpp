#pragma once

namespace anq {

/// Execution path for data-parallel kernels. Both paths return identical
/// results; the serial one is kept as the reference for tests and benchmarks.
enum class Exec { serial, parallel };

}  // namespace anq
