from setuptools import setup, find_packages

with open("README.md", encoding="utf-8") as f:
    long_description = f.read()
    
VERSION = '1.0.0'

setup(
    name='dynamicpruning',
    version=VERSION,
    description='Dynamic data pruning as an online sample selection process',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["tests"]),
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Programming Language :: Python :: 3.13',
    ],
    keywords=['data pruning', 'active learning', 'bandits'],
    install_requires=[
        'numpy',
        'func-timeout',
        'attrs',
        'tqdm',
        'typing_extensions; python_version < "3.11"',
    ],
    entry_points={
        'console_scripts': ['dynamicpruning = dynamicpruning.cli:main'],
    },
    python_requires='>=3.10',
)
