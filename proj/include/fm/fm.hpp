#pragma once

#include "fm/config.hpp"
#include "fm/encoder.hpp"
#include "fm/error.hpp"
#include "fm/eval.hpp"
#include "fm/features_matrix.hpp"
#include "fm/gradcheck.hpp"
#include "fm/objective.hpp"
#include "fm/prompt_bank.hpp"
#include "fm/report.hpp"
#include "fm/rng.hpp"
#include "fm/store_io.hpp"
#include "fm/trainer.hpp"
#include "fm/vecmath.hpp"
