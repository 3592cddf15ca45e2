#pragma once

// Umbrella header for the triphash toolkit: triplet-trained embeddings,
// sign-code binarization, and bit-packed Hamming retrieval.

#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "hashing.hpp"
#include "io.hpp"
#include "losses.hpp"
#include "matrix.hpp"
#include "mining.hpp"
#include "mlp.hpp"
#include "pipeline.hpp"
#include "random.hpp"
