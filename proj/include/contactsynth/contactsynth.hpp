#pragma once

#include "annotate.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "kinematics.hpp"
#include "pipeline.hpp"
#include "planner.hpp"
#include "primitives.hpp"
#include "proposal.hpp"
#include "qp.hpp"
#include "refine.hpp"
#include "rng.hpp"
#include "so3.hpp"
#include "wrench.hpp"
