#pragma once

// Umbrella header for the whole library.

#include "conner/attributes.hpp"
#include "conner/checkpoint.hpp"
#include "conner/corpus.hpp"
#include "conner/eval.hpp"
#include "conner/json_io.hpp"
#include "conner/kernels.hpp"
#include "conner/lstm.hpp"
#include "conner/matrix.hpp"
#include "conner/model.hpp"
#include "conner/param_store.hpp"
#include "conner/rng.hpp"
#include "conner/synthgen.hpp"
#include "conner/train.hpp"
