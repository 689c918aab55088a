from setuptools import setup, find_packages

setup(
    name="kmaxbound",
    version="0.1.0",
    description="Anticoncentration checks for Gaussian order statistics and k-FWER step-down testing.",
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        'click==8.1.8',
        'numpy==1.26.4',
        'pandas==2.2.1',
        'PyYAML==6.0.2',
        'scikit-learn==1.5.2',
        'scipy==1.13.1',
    ],
    extras_require={
        'test': ['pytest==8.3.4'],
    },
    entry_points={
        'console_scripts': [
            'kmaxbound=src.cli:main',
        ],
    },
    classifiers=[
        'Programming Language :: Python :: 3',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.9',
)
