#pragma once

#include "schelling/random.hpp"
#include "schelling/ring.hpp"
#include "schelling/structures.hpp"
#include "schelling/trace.hpp"
#include "schelling/combinatorics.hpp"
#include "schelling/meanfield.hpp"
#include "schelling/coupling.hpp"
#include "schelling/experiments.hpp"
