# -*- coding: utf-8 -*-

from setuptools import find_packages, setup

with open('README.rst', 'r', encoding='utf-8') as stream:
    readme = stream.read()

with open('sac_actor_lab/version.txt', 'r', encoding='utf-8') as stream:
    version = stream.read().strip()

setup(
    name='sac-actor-lab',
    description='Desk-scale laboratory for the soft actor-critic actor loss',
    long_description=readme,
    keywords='reinforcement-learning soft-actor-critic gradient-estimators',
    license='MIT',
    version=version,
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    packages=find_packages(exclude=['tests']),
    package_data={
        'sac_actor_lab': [
            'version.txt',
        ],
    },
    entry_points={
        'console_scripts': [
            'sac-actor-lab = sac_actor_lab:main',
        ],
    },
    python_requires='>=3.10',
    install_requires=[
        'fluent-logger>=0.10,<1',
        'numpy>=1.23,<3',
        'scipy>=1.11,<2',
        'structlog>=23.1',
        'voluptuous>=0.13,<1',
    ],
)
