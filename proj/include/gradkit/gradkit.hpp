#pragma once

// Umbrella header.

#include "gradkit/activations.hpp"
#include "gradkit/autograd.hpp"
#include "gradkit/checkpoint.hpp"
#include "gradkit/common.hpp"
#include "gradkit/conv.hpp"
#include "gradkit/gcnn.hpp"
#include "gradkit/idx.hpp"
#include "gradkit/init.hpp"
#include "gradkit/landscapes.hpp"
#include "gradkit/layers.hpp"
#include "gradkit/models.hpp"
#include "gradkit/optim.hpp"
#include "gradkit/rng.hpp"
#include "gradkit/se2.hpp"
#include "gradkit/tensor.hpp"
#include "gradkit/train.hpp"
#include "gradkit/tropical.hpp"
