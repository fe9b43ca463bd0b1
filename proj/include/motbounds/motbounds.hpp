#pragma once

// Umbrella header.

#include "motbounds/config.hpp"
#include "motbounds/coupling.hpp"
#include "motbounds/errors.hpp"
#include "motbounds/expr.hpp"
#include "motbounds/io.hpp"
#include "motbounds/lp.hpp"
#include "motbounds/market.hpp"
#include "motbounds/measure.hpp"
#include "motbounds/mot.hpp"
#include "motbounds/parallel.hpp"
#include "motbounds/perturb.hpp"
#include "motbounds/structure.hpp"
#include "motbounds/tree_model.hpp"
