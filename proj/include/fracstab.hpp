#pragma once

#include "fracstab/errors.hpp"
#include "fracstab/sobolev_params.hpp"
#include "fracstab/bubble.hpp"
#include "fracstab/quadrature.hpp"
#include "fracstab/grid.hpp"
#include "fracstab/norms.hpp"
#include "fracstab/linear_theory.hpp"
#include "fracstab/fit.hpp"
#include "fracstab/spectral.hpp"
#include "fracstab/witness.hpp"
#include "fracstab/experiments.hpp"
