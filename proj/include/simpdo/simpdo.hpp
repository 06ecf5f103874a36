#pragma once

#include "simpdo/cli.hpp"
#include "simpdo/diagnostics.hpp"
#include "simpdo/encoder.hpp"
#include "simpdo/evaluation.hpp"
#include "simpdo/gradcheck.hpp"
#include "simpdo/interactions.hpp"
#include "simpdo/manifest.hpp"
#include "simpdo/objective.hpp"
#include "simpdo/random.hpp"
#include "simpdo/trainer.hpp"
