#pragma once

// Umbrella header: mesh-free reduced-order hyperelastic simulation over
// reproducing-kernel (RKPM) bases with skinning-eigenmode subspaces.

#include "rksim/basis.hpp"
#include "rksim/bench.hpp"
#include "rksim/core.hpp"
#include "rksim/elasticity.hpp"
#include "rksim/kinematics.hpp"
#include "rksim/modes.hpp"
#include "rksim/oracle.hpp"
#include "rksim/pipeline.hpp"
#include "rksim/sampling.hpp"
#include "rksim/scene.hpp"
#include "rksim/simulate.hpp"
#include "rksim/trajectory.hpp"
