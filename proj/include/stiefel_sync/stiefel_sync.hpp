#pragma once

#include "stiefel_sync/errors.hpp"
#include "stiefel_sync/random.hpp"
#include "stiefel_sync/stiefel_core.hpp"
#include "stiefel_sync/network.hpp"
#include "stiefel_sync/dynamics.hpp"
#include "stiefel_sync/diagnostics.hpp"
#include "stiefel_sync/integrator.hpp"
#include "stiefel_sync/initial_data.hpp"
#include "stiefel_sync/config.hpp"
#include "stiefel_sync/scenarios.hpp"
