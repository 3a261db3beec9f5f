// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spde/errors.hpp"
#include "spde/state_space.hpp"
#include "spde/rng.hpp"
#include "spde/parallel.hpp"
#include "spde/semigroup.hpp"
#include "spde/path.hpp"
#include "spde/noise.hpp"
#include "spde/coefficients.hpp"
#include "spde/convolution.hpp"
#include "spde/solver.hpp"
#include "spde/models.hpp"
#include "spde/campaign.hpp"
