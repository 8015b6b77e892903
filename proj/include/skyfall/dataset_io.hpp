#pragma once

#include <string>

#include "skyfall/trajectory.hpp"

namespace skyfall {

// CSV with header `traj_id,point_idx,x,y,z`, one point per row, rows
// grouped by trajectory and ordered by point_idx (0..19 contiguous).
// Floats are written with 17 significant digits so write/read round-trips
// are bit-exact. The file stores geometry only; kind is supplied by the
// caller on load.
void write_dataset(const Dataset& d, const std::string& path);

Dataset read_dataset(const std::string& path, DatasetKind kind = DatasetKind::real);

}  // namespace skyfall
