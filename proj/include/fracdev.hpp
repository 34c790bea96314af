#pragma once

#include "fracdev/entropy.hpp"
#include "fracdev/error.hpp"
#include "fracdev/fields.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/rng.hpp"
#include "fracdev/roots.hpp"
#include "fracdev/smalldev.hpp"
#include "fracdev/stats.hpp"
