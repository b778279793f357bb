#pragma once

#include "chamnet/error.hpp"
#include "chamnet/rng.hpp"
#include "chamnet/space.hpp"
#include "chamnet/builtin_spaces.hpp"
#include "chamnet/qmc.hpp"
#include "chamnet/gp.hpp"
#include "chamnet/sampler.hpp"
#include "chamnet/resource.hpp"
#include "chamnet/fitness.hpp"
#include "chamnet/ees.hpp"
#include "chamnet/oracle.hpp"
