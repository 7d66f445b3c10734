#pragma once

#include "net.hpp"
#include "model.hpp"
#include "equilibrium.hpp"
#include "control.hpp"
#include "sparse.hpp"
#include "scenario.hpp"
#include "io.hpp"
#include "plots.hpp"
