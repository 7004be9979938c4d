#pragma once

#include "fedarmor/attacks.hpp"
#include "fedarmor/cli.hpp"
#include "fedarmor/config.hpp"
#include "fedarmor/data.hpp"
#include "fedarmor/error.hpp"
#include "fedarmor/experiment.hpp"
#include "fedarmor/federation.hpp"
#include "fedarmor/metrics.hpp"
#include "fedarmor/nn.hpp"
#include "fedarmor/privacy.hpp"
#include "fedarmor/rng.hpp"
#include "fedarmor/tensor.hpp"
