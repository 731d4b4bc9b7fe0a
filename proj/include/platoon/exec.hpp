#pragma once

namespace platoon {

// Every data-parallel kernel takes one of these. `serial` is the reference
// path the tests compare the OpenMP path against; both produce bitwise
// identical results because each loop iteration writes only its own slot.
enum class Exec { serial, parallel };

constexpr bool use_threads(Exec exec) noexcept { return exec == Exec::parallel; }

}  // namespace platoon
