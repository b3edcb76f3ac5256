#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Gait data augmentation by anthropometric scaling and trajectory
optimization.
"""
