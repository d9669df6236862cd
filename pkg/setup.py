import os
import sys

from setuptools import setup

from sitebid import VERSION

PATH_BASE = os.path.dirname(__file__)
PYTEST_RUNNER = ['pytest-runner'] if 'test' in sys.argv else []

f = open(os.path.join(PATH_BASE, 'README.rst'))
README = f.read()
f.close()


setup(
    name='django-sitebid',
    version='.'.join(map(str, VERSION)),

    description='Reusable application for Django introducing group-based search engine marketing bidding',
    long_description=README,
    license='BSD 3-Clause License',

    packages=[
        'sitebid',
        'sitebid.bidders',
        'sitebid.rpcmodels',
        'sitebid.management',
        'sitebid.management.commands',
    ],
    include_package_data=True,
    zip_safe=False,

    install_requires=[
        'django',
        'django-etc >= 1.2.0',
        'numpy',
        'torch',
    ],
    setup_requires=[] + PYTEST_RUNNER,
    tests_require=[
        'pytest',
        'pytest-djangoapp>=1.1.0',
    ],

    entry_points={
        'console_scripts': ['sitebid = sitebid.cli:main'],
    },

    classifiers=[
        # As in https://pypi.python.org/pypi?:action=list_classifiers
        'Development Status :: 3 - Alpha',
        'Framework :: Django',
        'Intended Audience :: Developers',
        'Intended Audience :: Science/Research',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'License :: OSI Approved :: BSD License',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
)
