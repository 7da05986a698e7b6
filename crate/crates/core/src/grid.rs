use serde::{Deserialize, Serialize};

/// Dense `cells × users` array indexed by `(cell, user)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGrid<T> {
    cells: usize,
    users: usize,
    data: Vec<T>,
}

impl<T: Clone> UserGrid<T> {
    pub fn filled(cells: usize, users: usize, value: T) -> Self {
        Self {
            cells,
            users,
            data: vec![value; cells * users],
        }
    }
}

impl<T> UserGrid<T> {
    pub fn from_fn(cells: usize, users: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(cells * users);
        for j in 0..cells {
            for k in 0..users {
                data.push(f(j, k));
            }
        }
        Self { cells, users, data }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn get(&self, cell: usize, user: usize) -> &T {
        &self.data[cell * self.users + user]
    }

    #[inline]
    pub fn get_mut(&mut self, cell: usize, user: usize) -> &mut T {
        &mut self.data[cell * self.users + user]
    }

    /// Row-major iteration: all users of cell 0, then cell 1, ...
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn row(&self, cell: usize) -> &[T] {
        &self.data[cell * self.users..(cell + 1) * self.users]
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> UserGrid<U> {
        UserGrid {
            cells: self.cells,
            users: self.users,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> UserGrid<T> {
    #[inline]
    pub fn at(&self, cell: usize, user: usize) -> T {
        self.data[cell * self.users + user]
    }
}
