#pragma once

#include "visc/core.hpp"
#include "visc/check_report.hpp"
#include "visc/osgood.hpp"
#include "visc/transform.hpp"
#include "visc/hamiltonian.hpp"
#include "visc/mbs.hpp"
#include "visc/solver.hpp"
