# -*- coding: utf-8 -*-

# Copyright 2026 The raydet Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Module used to setup the raydet package."""

from __future__ import print_function

from setuptools import setup, find_packages

version = "0.0.1.dev1"
install_require = [
    'numpy',
    'scipy>=1.8',
    'jinja2',
    'pyyaml',
]

tests_require = [
    'tox >= 2.3.1',
]

setup(
    license='Apache-2.0: http://www.apache.org/licenses/LICENSE-2.0',
    packages=find_packages(exclude=["unit_tests"]),
    package_data={'raydet': ['config.yaml', 'templates/*.j2']},
    zip_safe=False,
    install_requires=install_require,
    entry_points={
        'console_scripts': ['raydet=raydet.cli:main'],
    },
)
