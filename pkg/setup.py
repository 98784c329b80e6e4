# Always prefer setuptools over distutils
from setuptools import setup, find_packages
from codecs import open
from os import path
import re

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

# read the version without importing the package and its dependencies
with open(path.join(here, 'blursplat', '__init__.py'), encoding='utf-8') as f:
    version = re.search(r'__version__ = "([^"]+)"', f.read()).group(1)

setup(
    name='blursplat-lib',
    version=version,
    description='Blur-aware Gaussian splatting SLAM backend with motion blur synthesis and evaluation',
    long_description=long_description,

    license='AGPL-3.0',

    # See https://pypi.python.org/pypi?%3Aaction=list_classifiers
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Image Processing',
        'License :: OSI Approved :: GNU Affero General Public License v3',

        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],

    keywords='slam gaussian splatting motion blur deblurring tum trajectory',
    packages=find_packages(exclude=['contrib', 'docs', 'tests']),
    python_requires='>=3.8',

    install_requires=[
        'Babel>=2.0',
        'reportbro-fpdf>=1.7.10',
        'Pillow>=4.0',
        'simpleeval>=0.9.10',
        'xlsxwriter',
        'numpy>=1.20',
        'scipy>=1.6',
        'scikit-image>=0.19',
        'torch>=1.11',
    ],

    extras_require={
        'test': ['pytest>=6.0'],
    },

    package_data={
        'blursplat': ['data/default.cfg'],
    },

    entry_points={
        'console_scripts': [
            'blursplat=blursplat.cli:main',
        ],
    },
)
