#!/usr/bin/env python3
"""
Setup script for jafar
"""

from setuptools import setup, find_packages
from pathlib import Path

# Read README
readme_path = Path(__file__).parent / "README.md"
long_description = readme_path.read_text(encoding='utf-8') if readme_path.exists() else ""

# Read version
version = "0.1.0"
init_path = Path(__file__).parent / "jafar" / "__init__.py"
if init_path.exists():
    for line in init_path.read_text().splitlines():
        if line.startswith("__version__"):
            version = line.split('"')[1]
            break

setup(
    name="jafar-multiview",
    version=version,
    author="JAFAR Multiview Contributors",
    description="Bayesian multiview factor regression with adaptive cumulative shrinkage priors",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=['tests']),
    include_package_data=True,
    package_data={
        'jafar': [
            'templates/*.toml',
        ]
    },
    entry_points={
        'console_scripts': [
            'jafar=jafar.cli:main',
            'jf=jafar.cli:main',  # Short alias
        ],
    },
    python_requires='>=3.10',
    install_requires=[
        'numpy>=1.24',
        'scipy>=1.10',
        'pandas>=2.0',
        'joblib>=1.2',
        'tomli>=1.1; python_version < "3.11"',
    ],
    extras_require={
        'dev': [
            'pytest>=6.0.0',
            'black',
            'flake8',
            'mypy',
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
    ],
)
